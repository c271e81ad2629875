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

// Slow, direct re-implementations used to cross-check the library. None of
// these call into xmoe::eval or xmoe::ops.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xmoe/moe/transformer.hpp"
#include "xmoe/vae/vae_gmm.hpp"

namespace xmoe::oracles {

using Words = std::vector<std::string>;

/// Corpus BLEU by linear scans over n-gram lists.
double naive_bleu(const std::vector<Words>& candidates, const std::vector<Words>& references, int n);
double naive_rouge1(const Words& candidate, const Words& reference);
/// Full (m+1) x (n+1) LCS table.
double naive_rougeL(const Words& candidate, const Words& reference);
double naive_distinct(const std::vector<Words>& corpus, int n);
/// Pair enumeration: 2(ad - bc) / ((a+b)(b+d) + (a+c)(c+d)).
double pair_counting_ari(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth);
double two_pass_rmse(const std::vector<double>& predicted, const std::vector<double>& truth);

/// Gamma-weighted sum of per-component Gaussian KLs plus KL(gamma || pi).
double naive_mixture_kl(const std::vector<double>& mu, const std::vector<double>& log_var,
                        const std::vector<double>& gamma, const std::vector<double>& pi,
                        const std::vector<std::vector<double>>& prior_mu,
                        const std::vector<std::vector<double>>& prior_var);

/// -1/2 * sum(1 + log_var - mu^2 - exp(log_var)).
double standard_normal_kl(const std::vector<double>& mu, const std::vector<double>& log_var);

/// Plain-loop forward pass of the language model in which every expert
/// contributes with its full softmax score (no top-k). Equals forward_lm when
/// k equals the expert count. Returns (T x V) logits row-major.
std::vector<double> dense_forward(const moe::LanguageModel& model, const std::vector<moe::TokenId>& tokens,
                                  std::size_t gate);

}  // namespace xmoe::oracles
