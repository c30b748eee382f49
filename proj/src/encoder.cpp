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


#include "structkd/encoder.hpp"

#include <cmath>
#include <random>

#include "structkd/errors.hpp"

namespace structkd {

namespace {

LstmParams lstm_zeros(int d, int h) {
  return {Matrix::Zero(4 * h, d), Matrix::Zero(4 * h, h), Matrix::Zero(4 * h, 1)};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Runs one direction over inputs in the given order; rows of h/c/gates are
// indexed by token position regardless of direction.
void run_lstm(const LstmParams& p, const Matrix& inputs, bool reverse, Matrix& h_out, Matrix& c_out,
              Matrix& gates_out) {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index h = p.w_rec.cols();
  h_out.setZero(n, h);
  c_out.setZero(n, h);
  gates_out.setZero(n, 4 * h);
  Vector h_prev = Vector::Zero(h);
  Vector c_prev = Vector::Zero(h);
  for (Eigen::Index step = 0; step < n; ++step) {
    const Eigen::Index t = reverse ? n - 1 - step : step;
    Vector z = p.w_in * inputs.row(t).transpose() + p.w_rec * h_prev + p.bias.col(0);
    for (Eigen::Index u = 0; u < h; ++u) {
      z(u) = sigmoid(z(u));
      z(h + u) = sigmoid(z(h + u));
      z(2 * h + u) = std::tanh(z(2 * h + u));
      z(3 * h + u) = sigmoid(z(3 * h + u));
    }
    const Vector c = z.segment(h, h).cwiseProduct(c_prev) + z.segment(0, h).cwiseProduct(z.segment(2 * h, h));
    const Vector hv = z.segment(3 * h, h).cwiseProduct(c.array().tanh().matrix());
    gates_out.row(t) = z.transpose();
    c_out.row(t) = c.transpose();
    h_out.row(t) = hv.transpose();
    h_prev = hv;
    c_prev = c;
  }
}

// BPTT for one direction. dh holds d loss / d h_t from the projection;
// returns d loss / d inputs.
Matrix backprop_lstm(const LstmParams& p, const Matrix& inputs, bool reverse, const Matrix& hs,
                     const Matrix& cs, const Matrix& gates, const Matrix& dh, LstmParams& g) {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index h = p.w_rec.cols();
  Matrix d_inputs = Matrix::Zero(n, inputs.cols());
  Vector dh_next = Vector::Zero(h);
  Vector dc_next = Vector::Zero(h);
  for (Eigen::Index step = n - 1; step >= 0; --step) {
    const Eigen::Index t = reverse ? n - 1 - step : step;
    const bool has_prev = step > 0;
    const Eigen::Index t_prev = reverse ? t + 1 : t - 1;
    const Vector h_prev = has_prev ? Vector(hs.row(t_prev).transpose()) : Vector::Zero(h);
    const Vector c_prev = has_prev ? Vector(cs.row(t_prev).transpose()) : Vector::Zero(h);

    const Vector gi = gates.row(t).segment(0, h).transpose();
    const Vector gf = gates.row(t).segment(h, h).transpose();
    const Vector gg = gates.row(t).segment(2 * h, h).transpose();
    const Vector go = gates.row(t).segment(3 * h, h).transpose();
    const Vector tanh_c = cs.row(t).transpose().array().tanh();

    const Vector dht = dh.row(t).transpose() + dh_next;
    const Vector dc = dc_next + dht.cwiseProduct(go).cwiseProduct((1.0 - tanh_c.array().square()).matrix());

    Vector dz(4 * h);
    dz.segment(0, h) = dc.cwiseProduct(gg).array() * gi.array() * (1.0 - gi.array());
    dz.segment(h, h) = dc.cwiseProduct(c_prev).array() * gf.array() * (1.0 - gf.array());
    dz.segment(2 * h, h) = dc.cwiseProduct(gi).array() * (1.0 - gg.array().square());
    dz.segment(3 * h, h) = dht.cwiseProduct(tanh_c).array() * go.array() * (1.0 - go.array());

    g.w_in.noalias() += dz * inputs.row(t);
    g.w_rec.noalias() += dz * h_prev.transpose();
    g.bias.col(0) += dz;
    d_inputs.row(t).noalias() += (p.w_in.transpose() * dz).transpose();
    dh_next = p.w_rec.transpose() * dz;
    dc_next = dc.cwiseProduct(gf);
  }
  return d_inputs;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelShape& s) {
  if (s.vocab < 1 || s.emb_dim < 1 || s.hidden < 1 || s.labels < 1)
    throw ContractViolation("model dimensions must be positive");
  ModelParams p;
  p.embeddings = Matrix::Zero(s.vocab, s.emb_dim);
  p.forward = lstm_zeros(s.emb_dim, s.hidden);
  p.backward = lstm_zeros(s.emb_dim, s.hidden);
  p.projection = Matrix::Zero(2 * s.hidden, s.labels);
  p.transitions = Matrix::Zero(s.labels + 1, s.labels);
  return p;
}

ModelParams ModelParams::init(const ModelShape& shape, std::uint64_t seed) {
  ModelParams p = zeros(shape);
  p.rng_seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.1, 0.1);
  for (auto& [name, tensor] : p.tensors())
    for (Eigen::Index i = 0; i < tensor->size(); ++i) tensor->data()[i] = uniform(rng);
  for (LstmParams* dir : {&p.forward, &p.backward})
    dir->bias.middleRows(shape.hidden, shape.hidden).setOnes();
  return p;
}

ModelShape ModelParams::shape() const {
  return {static_cast<int>(embeddings.rows()), static_cast<int>(embeddings.cols()),
          static_cast<int>(forward.w_rec.cols()), static_cast<int>(projection.cols())};
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::tensors() {
  return {{"embeddings", &embeddings},
          {"lstm.fwd.w_in", &forward.w_in},
          {"lstm.fwd.w_rec", &forward.w_rec},
          {"lstm.fwd.bias", &forward.bias},
          {"lstm.bwd.w_in", &backward.w_in},
          {"lstm.bwd.w_rec", &backward.w_rec},
          {"lstm.bwd.bias", &backward.bias},
          {"projection", &projection},
          {"transitions", &transitions}};
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, t] : const_cast<ModelParams*>(this)->tensors()) out.emplace_back(name, t);
  return out;
}

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, t] : tensors())
    if (!t->allFinite()) return false;
  return true;
}

ModelParams& ModelParams::operator+=(const ModelParams& other) {
  auto mine = tensors();
  auto theirs = other.tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].second += *theirs[i].second;
  return *this;
}

ModelParams& ModelParams::operator*=(double s) {
  for (auto& [name, t] : tensors()) *t *= s;
  return *this;
}

double ModelParams::squared_norm() const {
  double sum = 0.0;
  for (const auto& [name, t] : tensors()) sum += t->squaredNorm();
  return sum;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (rng_seed != other.rng_seed || shape() != other.shape()) return false;
  auto mine = tensors();
  auto theirs = other.tensors();
  for (std::size_t i = 0; i < mine.size(); ++i)
    if (*mine[i].second != *theirs[i].second) return false;
  return true;
}

std::vector<int> TokenBatch::lengths() const {
  std::vector<int> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(static_cast<int>(s.tokens.size()));
  return out;
}

EncoderTrace encode_sentence(const ModelParams& params, std::span<const int> tokens,
                             const Matrix& input_mask) {
  if (tokens.empty()) throw ContractViolation("cannot encode an empty sentence");
  const auto n = static_cast<Eigen::Index>(tokens.size());
  EncoderTrace tr;
  tr.tokens.reserve(tokens.size());
  for (int id : tokens) tr.tokens.push_back(id >= 0 && id < params.embeddings.rows() ? id : 0);

  tr.inputs.resize(n, params.embeddings.cols());
  for (Eigen::Index t = 0; t < n; ++t) tr.inputs.row(t) = params.embeddings.row(tr.tokens[t]);
  if (input_mask.size() > 0) {
    if (input_mask.rows() != n || input_mask.cols() != params.embeddings.cols())
      throw ContractViolation("input mask shape does not match the sentence");
    tr.input_mask = input_mask;
    tr.inputs = tr.inputs.cwiseProduct(input_mask);
  }

  run_lstm(params.forward, tr.inputs, false, tr.fwd_h, tr.fwd_c, tr.fwd_gates);
  run_lstm(params.backward, tr.inputs, true, tr.bwd_h, tr.bwd_c, tr.bwd_gates);
  tr.features.resize(n, tr.fwd_h.cols() + tr.bwd_h.cols());
  tr.features << tr.fwd_h, tr.bwd_h;
  tr.emissions = tr.features * params.projection;
  return tr;
}

std::vector<Matrix> encode(const ModelParams& params, const TokenBatch& batch) {
  if (batch.sentences.empty()) throw ContractViolation("cannot encode an empty batch");
  std::vector<Matrix> out;
  out.reserve(batch.size());
  for (const auto& s : batch.sentences) out.push_back(encode_sentence(params, s.tokens).emissions);
  return out;
}

void backprop_sentence(const ModelParams& params, const EncoderTrace& trace,
                       const Matrix& emission_grad, ModelParams& grads) {
  if (emission_grad.rows() != trace.emissions.rows() || emission_grad.cols() != trace.emissions.cols())
    throw ContractViolation("emission gradient shape does not match encoder output");
  const Eigen::Index h = params.forward.w_rec.cols();
  grads.projection.noalias() += trace.features.transpose() * emission_grad;
  const Matrix d_features = emission_grad * params.projection.transpose();

  Matrix d_inputs = backprop_lstm(params.forward, trace.inputs, false, trace.fwd_h, trace.fwd_c,
                                  trace.fwd_gates, d_features.leftCols(h), grads.forward);
  d_inputs += backprop_lstm(params.backward, trace.inputs, true, trace.bwd_h, trace.bwd_c,
                            trace.bwd_gates, d_features.rightCols(h), grads.backward);
  if (trace.input_mask.size() > 0) d_inputs = d_inputs.cwiseProduct(trace.input_mask);
  for (std::size_t t = 0; t < trace.tokens.size(); ++t)
    grads.embeddings.row(trace.tokens[t]) += d_inputs.row(static_cast<Eigen::Index>(t));
}

ModelParams backprop(const ModelParams& params, const TokenBatch& batch,
                     const std::vector<Matrix>& emission_grads, const Matrix& transition_grads) {
  if (emission_grads.size() != batch.size())
    throw ContractViolation("need one emission gradient per sentence");
  if (transition_grads.rows() != params.transitions.rows() ||
      transition_grads.cols() != params.transitions.cols())
    throw ContractViolation("transition gradient shape mismatch");
  ModelParams grads = params.zeros_like();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const EncoderTrace trace = encode_sentence(params, batch.sentences[i].tokens);
    backprop_sentence(params, trace, emission_grads[i], grads);
  }
  grads.transitions += transition_grads;
  return grads;
}

}  // namespace structkd
