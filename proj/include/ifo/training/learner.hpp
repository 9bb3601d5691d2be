#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ifo/autodiff/adam.hpp"
#include "ifo/autodiff/tape.hpp"
#include "ifo/autodiff/tensor.hpp"
#include "ifo/error.hpp"
#include "ifo/nn/network.hpp"
#include "ifo/random.hpp"

namespace ifo::training {

using ad::Tensor;

/// Row-major design matrix with one integer label per row.
struct LabelledRows {
  std::size_t width = 0;
  std::vector<double> rows;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const { return {rows.data() + i * width, width}; }

  void push(std::span<const double> x, int label) {
    if (width == 0 && labels.empty()) width = x.size();
    if (x.size() != width) {
      throw DimensionError("row of width " + std::to_string(x.size()) + " added to rows of width " +
                           std::to_string(width));
    }
    rows.insert(rows.end(), x.begin(), x.end());
    labels.push_back(label);
  }
};

/// (s_t, s_{t+1}) concatenated, the input layout of the inverse dynamics model.
inline std::vector<double> transition_row(std::span<const double> s, std::span<const double> next) {
  if (s.size() != next.size()) {
    throw DimensionError("transition states differ in width: " + std::to_string(s.size()) + " vs " +
                         std::to_string(next.size()));
  }
  std::vector<double> row(s.begin(), s.end());
  row.insert(row.end(), next.begin(), next.end());
  return row;
}

/// Logits for many rows, evaluated in chunks without recording a tape.
inline std::vector<double> batch_logits(const nn::Network& net, std::span<const double> rows,
                                        std::size_t width, std::size_t chunk = 256) {
  if (width != net.input_dim()) {
    throw DimensionError("network expects input width " + std::to_string(net.input_dim()) + ", got " +
                         std::to_string(width));
  }
  const std::size_t n = width == 0 ? 0 : rows.size() / width;
  std::vector<double> out;
  out.reserve(n * net.output_dim());
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t b = std::min(chunk, n - start);
    ad::Tape tape(false);
    const auto first = rows.begin() + static_cast<std::ptrdiff_t>(start * width);
    const Tensor x = Tensor::from({b, width}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(b * width)));
    const Tensor logits = net.forward_logits(tape, x);
    out.insert(out.end(), logits.data().begin(), logits.data().end());
  }
  return out;
}

/// Greedy action per row; ties resolve to the lowest action id.
inline std::vector<int> batch_predict(const nn::Network& net, std::span<const double> rows,
                                      std::size_t width) {
  const auto logits = batch_logits(net, rows, width);
  const std::size_t k = net.output_dim();
  std::vector<int> actions(logits.size() / k);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    actions[i] = nn::Network::argmax(std::span(logits).subspan(i * k, k));
  }
  return actions;
}

inline double accuracy(const nn::Network& net, const LabelledRows& data) {
  if (data.empty()) return 0.0;
  const auto predicted = batch_predict(net, data.rows, data.width);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct FitOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
};

/// A network together with its optimiser state. Successive fit() calls
/// continue from the current weights and moments.
class Learner {
 public:
  explicit Learner(nn::Network net, ad::AdamOptions options = {})
      : net_(std::move(net)), params_(net_.parameters()),
        adam_(ad::AdamState::for_params(params_, options)) {}

  Learner(const Learner& other)
      : net_(other.net_.clone()), params_(net_.parameters()), adam_(other.adam_) {}
  Learner& operator=(const Learner& other) {
    if (this != &other) *this = Learner(other);
    return *this;
  }
  Learner(Learner&&) = default;
  Learner& operator=(Learner&&) = default;

  const nn::Network& net() const { return net_; }
  nn::Network& net() { return net_; }
  const ad::AdamState& optimizer() const { return adam_; }
  ad::AdamState& optimizer() { return adam_; }

  /// Minibatch Adam on the mean cross-entropy, reshuffling every epoch.
  /// Returns the mean training loss of the last epoch.
  double fit(const LabelledRows& data, const FitOptions& options, Rng& rng) {
    if (data.empty()) throw ContractError("fit needs at least one labelled row");
    if (data.width != net_.input_dim()) {
      throw DimensionError("network expects input width " + std::to_string(net_.input_dim()) +
                           ", got " + std::to_string(data.width));
    }
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> x;
    std::vector<int> y;
    double last_epoch_loss = 0.0;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
      rng.shuffle(std::span(order));
      double total = 0.0;
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t b = std::min(batch, order.size() - start);
        x.clear();
        y.clear();
        for (std::size_t i = start; i < start + b; ++i) {
          const auto r = data.row(order[i]);
          x.insert(x.end(), r.begin(), r.end());
          y.push_back(data.labels[order[i]]);
        }
        ad::Tape tape;
        const Tensor logits = net_.forward_logits(tape, Tensor::from({b, data.width}, x));
        const Tensor loss = tape.cross_entropy(logits, y);
        for (auto& p : params_) p.zero_grad();
        tape.backward(loss);
        ad::adam_step(params_, adam_);
        total += loss.item() * static_cast<double>(b);
      }
      last_epoch_loss = total / static_cast<double>(order.size());
    }
    return last_epoch_loss;
  }

 private:
  nn::Network net_;
  std::vector<Tensor> params_;
  ad::AdamState adam_;
};

}  // namespace ifo::training
