#include "nkca/tabular_denoiser.hpp"

#include <cmath>

namespace nkca {

std::uint64_t noisy_state_count(std::size_t dim, int categories, std::uint64_t limit) {
  const auto base = static_cast<std::uint64_t>(categories + 1);
  std::uint64_t n = 1;
  for (std::size_t i = 0; i < dim; ++i) {
    if (n > limit / base) {
      throw CapacityError("state space (K+1)^D = " + std::to_string(base) + "^" +
                          std::to_string(dim) + " exceeds the limit of " +
                          std::to_string(limit));
    }
    n *= base;
  }
  if (n > limit) {
    throw CapacityError("state space of " + std::to_string(n) + " states exceeds " +
                        std::to_string(limit));
  }
  return n;
}

std::uint64_t noisy_state_index(std::span<const Category> x, int categories) {
  const auto base = static_cast<std::uint64_t>(categories + 1);
  std::uint64_t idx = 0;
  for (Category v : x) {
    if (v < 1 || v > categories + 1) throw DomainError("state value outside 1..K+1");
    idx = idx * base + static_cast<std::uint64_t>(v - 1);
  }
  return idx;
}

std::vector<Category> noisy_state_from_index(std::uint64_t index, std::size_t dim,
                                             int categories) {
  const auto base = static_cast<std::uint64_t>(categories + 1);
  std::vector<Category> x(dim);
  for (std::size_t i = dim; i-- > 0;) {
    x[i] = static_cast<Category>(index % base + 1);
    index /= base;
  }
  return x;
}

template <typename T>
TabularDenoiser<T>::TabularDenoiser(std::size_t dim, int categories, TensorMap<T> params)
    : dim_(dim),
      categories_(categories),
      states_(noisy_state_count(dim, categories, kMaxTabularStates)),
      params_(std::move(params)) {
  if (categories < 2) throw ConfigError("tabular denoiser needs K >= 2");
  require_same_layout(init(dim, categories), params_, "tabular parameters");
}

template <typename T>
TensorMap<T> TabularDenoiser<T>::init(std::size_t dim, int categories) {
  const std::uint64_t states = noisy_state_count(dim, categories, kMaxTabularStates);
  TensorMap<T> params;
  params.emplace("table.logits",
                 BasicArray<T>({static_cast<std::size_t>(states), dim,
                                static_cast<std::size_t>(categories)}));
  return params;
}

template <typename T>
std::uint64_t TabularDenoiser<T>::row_index(const Batch<T>& x, Eigen::Index r) const {
  std::vector<Category> state(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    state[i] = static_cast<Category>(std::lround(static_cast<double>(x(r, static_cast<Eigen::Index>(i)))));
  }
  return noisy_state_index(state, categories_);
}

template <typename T>
DenoiserOutput<T> TabularDenoiser<T>::evaluate(const Batch<T>& x, std::span<const T>) const {
  if (static_cast<std::size_t>(x.cols()) != dim_) throw ShapeError("tabular denoiser: wrong input width");
  const auto& table = params_.at("table.logits");
  const auto width = static_cast<Eigen::Index>(dim_ * categories_);
  Matrix<T> logits(x.rows(), width);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T* row = table.data() + row_index(x, r) * static_cast<std::uint64_t>(width);
    for (Eigen::Index c = 0; c < width; ++c) logits(r, c) = row[c];
  }
  DenoiserOutput<T> out;
  out.kind = KernelKind::categorical;
  out.probs = grouped_softmax<T>(logits, categories_);
  return out;
}

template <typename T>
void TabularDenoiser<T>::accumulate_gradient(const Batch<T>& x, std::span<const T> beta,
                                             const OutputGradient<T>& upstream,
                                             TensorMap<T>& grads) const {
  const DenoiserOutput<T> out = evaluate(x, beta);
  const Matrix<T> d_logits = grouped_softmax_backward<T>(out.probs, upstream.d_probs, categories_);
  auto& g = grads.at("table.logits");
  const auto width = static_cast<Eigen::Index>(dim_ * categories_);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    T* row = g.data() + row_index(x, r) * static_cast<std::uint64_t>(width);
    for (Eigen::Index c = 0; c < width; ++c) row[c] += d_logits(r, c);
  }
}

template class TabularDenoiser<float>;
template class TabularDenoiser<double>;

}  // namespace nkca
