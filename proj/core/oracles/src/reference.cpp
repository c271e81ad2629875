// Copyright 2026 The xmoe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xmoe/oracles/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xmoe::oracles {

namespace {

std::vector<Words> ngrams(const Words& t, int n) {
  std::vector<Words> out;
  const auto len = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + len <= t.size(); ++i) out.emplace_back(t.begin() + i, t.begin() + i + len);
  return out;
}

std::size_t occurrences(const std::vector<Words>& list, const Words& g) {
  std::size_t c = 0;
  for (const auto& x : list)
    if (x == g) ++c;
  return c;
}

bool seen_before(const std::vector<Words>& list, std::size_t i) {
  for (std::size_t j = 0; j < i; ++j)
    if (list[j] == list[i]) return true;
  return false;
}

std::size_t clipped_overlap(const std::vector<Words>& cand, const std::vector<Words>& ref) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (seen_before(cand, i)) continue;
    total += std::min(occurrences(cand, cand[i]), occurrences(ref, cand[i]));
  }
  return total;
}

double f1(double overlap, double cand_len, double ref_len) {
  if (overlap == 0.0) return 0.0;
  const double p = overlap / cand_len, r = overlap / ref_len;
  return 2.0 * p * r / (p + r);
}

}  // namespace

double naive_bleu(const std::vector<Words>& candidates, const std::vector<Words>& references, int n) {
  if (candidates.size() != references.size()) throw std::invalid_argument("naive_bleu: size mismatch");
  double c_len = 0.0, r_len = 0.0;
  std::vector<double> matched(n, 0.0), total(n, 0.0);
  for (std::size_t p = 0; p < candidates.size(); ++p) {
    c_len += static_cast<double>(candidates[p].size());
    r_len += static_cast<double>(references[p].size());
    for (int k = 1; k <= n; ++k) {
      const auto cg = ngrams(candidates[p], k), rg = ngrams(references[p], k);
      total[k - 1] += static_cast<double>(cg.size());
      matched[k - 1] += static_cast<double>(clipped_overlap(cg, rg));
    }
  }
  if (c_len == 0.0) return 0.0;
  double product = 1.0;
  for (int k = 0; k < n; ++k) {
    const double num = matched[k] == 0.0 ? 1e-9 : matched[k];
    const double den = total[k] == 0.0 ? 1.0 : total[k];
    product *= num / den;
  }
  const double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - r_len / c_len);
  return bp * std::pow(product, 1.0 / n);
}

double naive_rouge1(const Words& candidate, const Words& reference) {
  if (candidate.empty()) return 0.0;
  const double overlap = static_cast<double>(clipped_overlap(ngrams(candidate, 1), ngrams(reference, 1)));
  return f1(overlap, static_cast<double>(candidate.size()), static_cast<double>(reference.size()));
}

double naive_rougeL(const Words& candidate, const Words& reference) {
  if (candidate.empty()) return 0.0;
  const std::size_t m = candidate.size(), n = reference.size();
  std::vector<std::vector<std::size_t>> table(m + 1, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j)
      table[i][j] = candidate[i - 1] == reference[j - 1] ? table[i - 1][j - 1] + 1
                                                          : std::max(table[i - 1][j], table[i][j - 1]);
  return f1(static_cast<double>(table[m][n]), static_cast<double>(m), static_cast<double>(n));
}

double naive_distinct(const std::vector<Words>& corpus, int n) {
  std::vector<Words> all;
  for (const auto& t : corpus)
    for (auto& g : ngrams(t, n)) all.push_back(std::move(g));
  if (all.empty()) return 0.0;
  std::size_t unique = 0;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (!seen_before(all, i)) ++unique;
  return static_cast<double>(unique) / static_cast<double>(all.size());
}

double pair_counting_ari(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("pair_counting_ari: size mismatch");
  double a = 0, b = 0, c = 0, d = 0;  // same/same, same/diff, diff/same, diff/diff
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (std::size_t j = i + 1; j < predicted.size(); ++j) {
      const bool sp = predicted[i] == predicted[j], st = truth[i] == truth[j];
      if (sp && st) ++a;
      else if (sp) ++b;
      else if (st) ++c;
      else ++d;
    }
  const double den = (a + b) * (b + d) + (a + c) * (c + d);
  if (den == 0.0) return 1.0;
  return 2.0 * (a * d - b * c) / den;
}

double two_pass_rmse(const std::vector<double>& predicted, const std::vector<double>& truth) {
  std::vector<double> sq(predicted.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
  double mean = 0.0;
  for (double s : sq) mean += s / static_cast<double>(sq.size());
  return std::sqrt(mean);
}

double naive_mixture_kl(const std::vector<double>& mu, const std::vector<double>& log_var,
                        const std::vector<double>& gamma, const std::vector<double>& pi,
                        const std::vector<std::vector<double>>& prior_mu,
                        const std::vector<std::vector<double>>& prior_var) {
  double kl = 0.0;
  for (std::size_t c = 0; c < gamma.size(); ++c) {
    double gauss = 0.0;
    for (std::size_t d = 0; d < mu.size(); ++d) {
      const double var = std::exp(log_var[d]);
      const double diff = mu[d] - prior_mu[c][d];
      gauss += 0.5 * (std::log(prior_var[c][d]) - log_var[d] + (var + diff * diff) / prior_var[c][d] - 1.0);
    }
    kl += gamma[c] * gauss;
    if (gamma[c] > 0.0) kl += gamma[c] * std::log(gamma[c] / pi[c]);
  }
  return kl;
}

double standard_normal_kl(const std::vector<double>& mu, const std::vector<double>& log_var) {
  double s = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) s += 1.0 + log_var[d] - mu[d] * mu[d] - std::exp(log_var[d]);
  return -0.5 * s;
}

namespace {

using Mat = std::vector<double>;  // row-major

Mat mm(const Mat& a, const Mat& b, std::size_t n, std::size_t k, std::size_t m) {
  Mat out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * m + j];
      out[i * m + j] = s;
    }
  return out;
}

Mat vals(const Var& v) { return Mat(v.value().values().begin(), v.value().values().end()); }

Mat rmsnorm(const Mat& x, const Mat& gain, std::size_t n, std::size_t m) {
  Mat out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < m; ++j) ss += x[i * m + j] * x[i * m + j];
    const double r = 1.0 / std::sqrt(ss / static_cast<double>(m) + 1e-6);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x[i * m + j] * r * gain[j];
  }
  return out;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

}  // namespace

std::vector<double> dense_forward(const moe::LanguageModel& model, const std::vector<moe::TokenId>& tokens,
                                  std::size_t gate) {
  const auto& cfg = model.config();
  const std::size_t t_len = tokens.size(), m = cfg.model_dim, v = cfg.vocab_size, heads = cfg.heads;
  const std::size_t hd = m / heads;
  Mat x(t_len * m);
  const Mat emb = vals(model.embed), pos = vals(model.pos);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j < m; ++j) x[t * m + j] = emb[tokens[t] * m + j] + pos[t * m + j];

  for (const auto& blk : model.blocks) {
    // attention
    const Mat xn = rmsnorm(x, vals(blk.attn.norm), t_len, m);
    const Mat q = mm(xn, vals(blk.attn.wq), t_len, m, m);
    const Mat k = mm(xn, vals(blk.attn.wk), t_len, m, m);
    const Mat val = mm(xn, vals(blk.attn.wv), t_len, m, m);
    Mat merged(t_len * m, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < t_len; ++i) {
        std::vector<double> s(i + 1);
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          double dotp = 0.0;
          for (std::size_t d = 0; d < hd; ++d) dotp += q[i * m + h * hd + d] * k[j * m + h * hd + d];
          s[j] = dotp / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (double& e : s) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j <= i; ++j)
          for (std::size_t d = 0; d < hd; ++d) merged[i * m + h * hd + d] += s[j] / z * val[j * m + h * hd + d];
      }
    }
    const Mat att = mm(merged, vals(blk.attn.wo), t_len, m, m);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += att[i];

    // every expert, weighted by its full softmax score
    const Mat xm = rmsnorm(x, vals(blk.moe_norm), t_len, m);
    const std::size_t experts = blk.bank.experts.size();
    const Mat logits = mm(xm, vals(blk.router.gates.at(gate)), t_len, m, experts);
    Mat y(t_len * m, 0.0);
    for (std::size_t t = 0; t < t_len; ++t) {
      double mx = -INFINITY;
      for (std::size_t e = 0; e < experts; ++e) mx = std::max(mx, logits[t * experts + e]);
      double z = 0.0;
      std::vector<double> p(experts);
      for (std::size_t e = 0; e < experts; ++e) z += (p[e] = std::exp(logits[t * experts + e] - mx));
      const Mat row(xm.begin() + static_cast<std::ptrdiff_t>(t * m), xm.begin() + static_cast<std::ptrdiff_t>((t + 1) * m));
      for (std::size_t e = 0; e < experts; ++e) {
        const auto& ex = blk.bank.experts[e];
        const std::size_t hid = ex.b1.value().size();
        Mat h = mm(row, vals(ex.w1), 1, m, hid);
        const Mat b1 = vals(ex.b1), b2 = vals(ex.b2);
        for (std::size_t j = 0; j < hid; ++j) h[j] = gelu(h[j] + b1[j]);
        const Mat o = mm(h, vals(ex.w2), 1, hid, m);
        for (std::size_t j = 0; j < m; ++j) y[t * m + j] += p[e] / z * (o[j] + b2[j]);
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
  }
  return mm(rmsnorm(x, vals(model.final_norm), t_len, m), vals(model.head), t_len, m, v);
}

}  // namespace xmoe::oracles
