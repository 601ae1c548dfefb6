#include "tppo/window_mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tppo/datagen.hpp"
#include "tppo/random.hpp"

namespace tppo::nn {

void ParamLayout::add(std::string name, std::size_t rows, std::size_t cols) {
  segments_.push_back({std::move(name), total_, rows, cols});
  total_ += rows * cols;
}

const Segment& ParamLayout::at(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw std::out_of_range("no parameter segment named " + name);
}

std::string ParamLayout::describe(std::size_t flat_index) const {
  for (const auto& s : segments_) {
    if (flat_index >= s.offset && flat_index < s.offset + s.size()) {
      const std::size_t local = flat_index - s.offset;
      return s.name + "[" + std::to_string(local / s.cols) + "," + std::to_string(local % s.cols) +
             "]";
    }
  }
  return "<out of range " + std::to_string(flat_index) + ">";
}

void add_trunk(ParamLayout& layout, const MlpDims& dims) {
  layout.add("embedding", static_cast<std::size_t>(dims.vocab),
             static_cast<std::size_t>(dims.d_embed));
  layout.add("trunk_w", static_cast<std::size_t>(dims.hidden), dims.input_width());
  layout.add("trunk_b", static_cast<std::size_t>(dims.hidden), 1);
}

std::vector<int> trailing_window(std::span<const int> seq, std::size_t end, int k) {
  std::vector<int> w(static_cast<std::size_t>(k), kPadId);
  end = std::min(end, seq.size());
  for (int i = 0; i < k; ++i) {
    const auto back = static_cast<std::size_t>(k - i);
    if (back <= end) w[static_cast<std::size_t>(i)] = seq[end - back];
  }
  return w;
}

TrunkCache trunk_forward(std::span<const double> theta, const ParamLayout& layout,
                         const MlpDims& dims, std::vector<int> window) {
  const auto& emb = layout.at("embedding");
  const auto& w = layout.at("trunk_w");
  const auto& b = layout.at("trunk_b");
  const auto d = static_cast<std::size_t>(dims.d_embed);
  const auto in_w = dims.input_width();

  TrunkCache cache;
  cache.hidden.assign(static_cast<std::size_t>(dims.hidden), 0.0);
  for (std::size_t j = 0; j < cache.hidden.size(); ++j) cache.hidden[j] = theta[b.offset + j];
  for (std::size_t slot = 0; slot < window.size(); ++slot) {
    const int id = window[slot];
    if (id < 0 || id >= dims.vocab)
      throw InvalidInput("token id " + std::to_string(id) + " outside vocabulary");
    if (id == kPadId) continue;
    const double* e = theta.data() + emb.offset + static_cast<std::size_t>(id) * d;
    for (std::size_t j = 0; j < cache.hidden.size(); ++j) {
      const double* row = theta.data() + w.offset + j * in_w + slot * d;
      double acc = 0.0;
      for (std::size_t q = 0; q < d; ++q) acc += row[q] * e[q];
      cache.hidden[j] += acc;
    }
  }
  for (auto& h : cache.hidden) h = std::tanh(h);
  cache.window = std::move(window);
  return cache;
}

void trunk_backward(std::span<const double> theta, const ParamLayout& layout,
                    const MlpDims& dims, const TrunkCache& cache,
                    std::span<const double> d_hidden, std::span<double> grad) {
  const auto& emb = layout.at("embedding");
  const auto& w = layout.at("trunk_w");
  const auto& b = layout.at("trunk_b");
  const auto d = static_cast<std::size_t>(dims.d_embed);
  const auto in_w = dims.input_width();
  const std::size_t hdim = cache.hidden.size();

  std::vector<double> d_pre(hdim);
  for (std::size_t j = 0; j < hdim; ++j)
    d_pre[j] = d_hidden[j] * (1.0 - cache.hidden[j] * cache.hidden[j]);
  for (std::size_t j = 0; j < hdim; ++j) grad[b.offset + j] += d_pre[j];

  for (std::size_t slot = 0; slot < cache.window.size(); ++slot) {
    const int id = cache.window[slot];
    if (id == kPadId) continue;
    const std::size_t e_off = emb.offset + static_cast<std::size_t>(id) * d;
    for (std::size_t j = 0; j < hdim; ++j) {
      if (d_pre[j] == 0.0) continue;
      const std::size_t row = w.offset + j * in_w + slot * d;
      for (std::size_t q = 0; q < d; ++q) {
        grad[row + q] += d_pre[j] * theta[e_off + q];
        grad[e_off + q] += d_pre[j] * theta[row + q];
      }
    }
  }
}

void head_forward(std::span<const double> theta, const Segment& w, const Segment& b,
                  std::span<const double> hidden, std::span<double> out) {
  const std::size_t h = hidden.size();
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = theta[b.offset + r];
    const double* row = theta.data() + w.offset + r * h;
    for (std::size_t j = 0; j < h; ++j) acc += row[j] * hidden[j];
    out[r] = acc;
  }
}

void head_backward(std::span<const double> theta, const Segment& w, const Segment& b,
                   std::span<const double> hidden, std::span<const double> d_out,
                   std::span<double> grad, std::span<double> d_hidden) {
  const std::size_t h = hidden.size();
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double g = d_out[r];
    if (g == 0.0) continue;
    grad[b.offset + r] += g;
    const std::size_t row = w.offset + r * h;
    for (std::size_t j = 0; j < h; ++j) {
      grad[row + j] += g * hidden[j];
      d_hidden[j] += g * theta[row + j];
    }
  }
}

void init_trunk(std::span<double> theta, const ParamLayout& layout, const MlpDims& dims,
                Rng& rng) {
  const auto& emb = layout.at("embedding");
  const auto& w = layout.at("trunk_w");
  for (std::size_t i = 0; i < emb.size(); ++i) theta[emb.offset + i] = rng.normal();
  for (std::size_t q = 0; q < static_cast<std::size_t>(dims.d_embed); ++q)
    theta[emb.offset + q] = 0.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.input_width()));
  for (std::size_t i = 0; i < w.size(); ++i) theta[w.offset + i] = scale * rng.normal();
}

void softmax_inplace(std::span<double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - m);
    z += v;
  }
  for (auto& v : logits) v /= z;
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - m);
  return m + std::log(z);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace tppo::nn
