// Copyright 2026 The structkd Authors.
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


#ifndef STRUCTKD_ENCODER_HPP_
#define STRUCTKD_ENCODER_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "structkd/lattice.hpp"

namespace structkd {

struct ModelShape {
  int vocab = 0;
  int emb_dim = 0;
  int hidden = 0;  // per direction
  int labels = 0;

  bool operator==(const ModelShape&) const = default;
};

// One LSTM direction. Gate blocks are stacked [input; forget; cell; output].
struct LstmParams {
  Matrix w_in;   // 4h x d
  Matrix w_rec;  // 4h x h
  Matrix bias;   // 4h x 1
};

// Everything SGD trains. Also used as the gradient container.
struct ModelParams {
  Matrix embeddings;  // vocab x d; row 0 is the UNK token
  LstmParams forward;
  LstmParams backward;
  Matrix projection;   // 2h x |V|
  Matrix transitions;  // (|V|+1) x |V|, last row is the start symbol
  std::uint64_t rng_seed = 0;

  // Uniform(-0.1, 0.1) weights, forget-gate bias 1, seeded.
  static ModelParams init(const ModelShape& shape, std::uint64_t seed);
  static ModelParams zeros(const ModelShape& shape);

  ModelShape shape() const;
  ModelParams zeros_like() const { return zeros(shape()); }

  // Named views in a fixed order; names are the checkpoint tensor names.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;

  std::size_t num_parameters() const;
  bool all_finite() const;

  ModelParams& operator+=(const ModelParams& other);
  ModelParams& operator*=(double s);
  double squared_norm() const;
  bool operator==(const ModelParams& other) const;
};

struct TokenSentence {
  std::vector<int> tokens;
  std::string language;
};

struct TokenBatch {
  std::vector<TokenSentence> sentences;

  std::size_t size() const { return sentences.size(); }
  std::vector<int> lengths() const;
};

// Forward activations of one sentence, kept for backprop.
struct EncoderTrace {
  std::vector<int> tokens;  // after UNK mapping
  Matrix inputs;            // n x d, after dropout
  Matrix input_mask;        // n x d inverted-dropout scale, empty when no dropout
  Matrix fwd_h, fwd_c, fwd_gates;  // n x h, n x h, n x 4h (post-activation)
  Matrix bwd_h, bwd_c, bwd_gates;
  Matrix features;  // n x 2h, [fwd_h | bwd_h]
  Matrix emissions;  // n x |V|
};

// Forward pass for one sentence. input_mask, when non-empty, multiplies the
// embedded inputs elementwise (n x d).
EncoderTrace encode_sentence(const ModelParams& params, std::span<const int> tokens,
                             const Matrix& input_mask = Matrix());

// Emission matrices for every sentence of the batch. Pure.
std::vector<Matrix> encode(const ModelParams& params, const TokenBatch& batch);

// Accumulates into grads the gradient given d loss / d emissions for one
// traced sentence.
void backprop_sentence(const ModelParams& params, const EncoderTrace& trace,
                       const Matrix& emission_grad, ModelParams& grads);

// Exact parameter gradients for a batch given upstream gradients with
// respect to each sentence's emissions and the shared transitions.
ModelParams backprop(const ModelParams& params, const TokenBatch& batch,
                     const std::vector<Matrix>& emission_grads, const Matrix& transition_grads);

// Builds the CRF lattice for a sentence from its emissions and the shared
// transitions.
inline Lattice make_lattice(const ModelParams& params, Matrix emissions) {
  return Lattice(std::move(emissions), params.transitions);
}

}  // namespace structkd

#endif  // STRUCTKD_ENCODER_HPP_
