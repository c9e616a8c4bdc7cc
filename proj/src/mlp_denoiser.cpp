#include "nkca/mlp_denoiser.hpp"

#include <algorithm>
#include <cmath>

namespace nkca {

namespace {

template <typename T>
Eigen::Map<const Matrix<T>> as_matrix(const BasicArray<T>& a) {
  const auto rows = static_cast<Eigen::Index>(a.shape().at(0));
  const auto cols = static_cast<Eigen::Index>(a.rank() > 1 ? a.shape()[1] : 1);
  return {a.data(), rows, cols};
}

template <typename T>
Eigen::Map<Matrix<T>> as_matrix(BasicArray<T>& a) {
  const auto rows = static_cast<Eigen::Index>(a.shape().at(0));
  const auto cols = static_cast<Eigen::Index>(a.rank() > 1 ? a.shape()[1] : 1);
  return {a.data(), rows, cols};
}

template <typename T>
Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> as_row(const BasicArray<T>& a) {
  return {a.data(), static_cast<Eigen::Index>(a.size())};
}

template <typename T>
Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> as_row(BasicArray<T>& a) {
  return {a.data(), static_cast<Eigen::Index>(a.size())};
}

template <typename T>
const BasicArray<T>& param(const TensorMap<T>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ShapeError("missing denoiser parameter '" + name + "'");
  return it->second;
}

template <typename T>
BasicArray<T>& param(TensorMap<T>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ShapeError("missing gradient slot '" + name + "'");
  return it->second;
}

std::string layer_name(std::size_t i, const char* leaf) {
  return "layer" + std::to_string(i) + "." + leaf;
}

std::string emb_name(std::size_t i) { return "emb" + std::to_string(i) + ".proj"; }

/// h * W^T. Without `batched` each row goes through the same matrix-vector
/// kernel, so a row's result does not depend on the batch around it.
template <typename T, typename M>
Matrix<T> times_transpose(const Matrix<T>& h, const M& W, bool batched) {
  if (batched) return h * W.transpose();
  Matrix<T> out(h.rows(), W.rows());
  Eigen::Matrix<T, Eigen::Dynamic, 1> in, res;
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    in = h.row(r).transpose();
    res.noalias() = W * in;
    out.row(r) = res.transpose();
  }
  return out;
}

template <typename T>
T sigmoid(T a) {
  return T(1) / (T(1) + std::exp(-a));
}

}  // namespace

template <typename T>
struct MlpDenoiser<T>::Tape {
  Matrix<T> embedding;
  std::vector<Matrix<T>> inputs;        // input to each hidden layer
  std::vector<Matrix<T>> preactivation;  // W h + b + P e
  Matrix<T> last_hidden;
  Matrix<T> logvar_raw;
};

template <typename T>
MlpDenoiser<T>::MlpDenoiser(DenoiserSpec spec, TensorMap<T> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  if (spec_.type != "mlp") throw ConfigError("MlpDenoiser needs spec.type == mlp");
  if (spec_.dim == 0) throw ConfigError("denoiser dimension must be positive");
  if (spec_.kind == KernelKind::categorical && spec_.categories < 2) {
    throw ConfigError("categorical denoiser needs K >= 2");
  }
  if (spec_.embedding_dim == 0 || spec_.embedding_dim % 2 != 0) {
    throw ConfigError("embedding dimension must be even and positive");
  }
  if (spec_.hidden.empty()) throw ConfigError("MLP needs at least one hidden layer");
  Rng dummy(0);
  const TensorMap<T> layout = init(spec_, dummy);
  require_same_layout(layout, params_, "MLP parameters");
}

template <typename T>
std::size_t MlpDenoiser<T>::input_width() const {
  return spec_.kind == KernelKind::continuous
             ? spec_.dim
             : spec_.dim * static_cast<std::size_t>(spec_.categories + 1);
}

template <typename T>
TensorMap<T> MlpDenoiser<T>::init(const DenoiserSpec& spec, Rng& rng) {
  TensorMap<T> params;
  auto uniform_fill = [&](BasicArray<T>& a, double bound) {
    for (auto& v : a.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  };
  std::size_t fan_in = spec.kind == KernelKind::continuous
                           ? spec.dim
                           : spec.dim * static_cast<std::size_t>(spec.categories + 1);
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    const std::size_t out = spec.hidden[i];
    BasicArray<T> weight({out, fan_in});
    BasicArray<T> bias({out});
    BasicArray<T> proj({out, spec.embedding_dim});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    uniform_fill(weight, bound);
    uniform_fill(bias, bound);
    uniform_fill(proj, 1.0 / std::sqrt(static_cast<double>(spec.embedding_dim)));
    params.emplace(layer_name(i, "weight"), std::move(weight));
    params.emplace(layer_name(i, "bias"), std::move(bias));
    params.emplace(emb_name(i), std::move(proj));
    fan_in = out;
  }
  if (spec.kind == KernelKind::continuous) {
    params.emplace("head.mu.weight", BasicArray<T>({spec.dim, fan_in}));
    params.emplace("head.mu.bias", BasicArray<T>({spec.dim}));
    params.emplace("head.logvar.weight", BasicArray<T>({spec.dim, fan_in}));
    params.emplace("head.logvar.bias", BasicArray<T>({spec.dim}));
  } else {
    const std::size_t width = spec.dim * static_cast<std::size_t>(spec.categories);
    params.emplace("head.logits.weight", BasicArray<T>({width, fan_in}));
    params.emplace("head.logits.bias", BasicArray<T>({width}));
  }
  return params;
}

template <typename T>
Matrix<T> MlpDenoiser<T>::encode_input(const Batch<T>& x) const {
  if (static_cast<std::size_t>(x.cols()) != spec_.dim) {
    throw ShapeError("denoiser input has " + std::to_string(x.cols()) +
                     " columns, expected " + std::to_string(spec_.dim));
  }
  if (spec_.kind == KernelKind::continuous) return x;
  const int width = spec_.categories + 1;
  Matrix<T> onehot = Matrix<T>::Zero(x.rows(), x.cols() * width);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      const auto v = static_cast<int>(std::lround(static_cast<double>(x(r, i))));
      if (v < 1 || v > width) throw DomainError("categorical input outside 1..K+1");
      onehot(r, i * width + (v - 1)) = T(1);
    }
  }
  return onehot;
}

template <typename T>
DenoiserOutput<T> MlpDenoiser<T>::forward(const Batch<T>& x, std::span<const T> beta,
                                          Tape* tape) const {
  if (beta.size() != static_cast<std::size_t>(x.rows())) {
    throw ShapeError("one noise level per batch row required");
  }
  Matrix<T> h = encode_input(x);
  Matrix<T> emb = sinusoidal_embed_batch<T>(beta, spec_.embedding_dim);
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    const auto W = as_matrix(param(params_, layer_name(i, "weight")));
    const auto b = as_row(param(params_, layer_name(i, "bias")));
    const auto P = as_matrix(param(params_, emb_name(i)));
    Matrix<T> a = times_transpose(h, W, tape != nullptr);
    a += times_transpose(emb, P, tape != nullptr);
    a.rowwise() += b;
    Matrix<T> next = a.unaryExpr([](T v) { return v * sigmoid(v); });
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->preactivation.push_back(std::move(a));
    }
    h = std::move(next);
  }

  DenoiserOutput<T> out;
  out.kind = spec_.kind;
  if (spec_.kind == KernelKind::continuous) {
    const auto Wmu = as_matrix(param(params_, std::string("head.mu.weight")));
    const auto bmu = as_row(param(params_, std::string("head.mu.bias")));
    const auto Wlv = as_matrix(param(params_, std::string("head.logvar.weight")));
    const auto blv = as_row(param(params_, std::string("head.logvar.bias")));
    out.mean = times_transpose(h, Wmu, tape != nullptr);
    out.mean.rowwise() += bmu;
    Matrix<T> lv = times_transpose(h, Wlv, tape != nullptr);
    lv.rowwise() += blv;
    out.variance = lv.unaryExpr([](T v) {
      return std::exp(std::clamp(v, static_cast<T>(kLogVarMin), static_cast<T>(kLogVarMax)));
    });
    if (tape) tape->logvar_raw = std::move(lv);
  } else {
    const auto Wl = as_matrix(param(params_, std::string("head.logits.weight")));
    const auto bl = as_row(param(params_, std::string("head.logits.bias")));
    Matrix<T> logits = times_transpose(h, Wl, tape != nullptr);
    logits.rowwise() += bl;
    out.probs = grouped_softmax<T>(logits, spec_.categories);
  }
  if (tape) {
    tape->embedding = std::move(emb);
    tape->last_hidden = std::move(h);
  }
  return out;
}

template <typename T>
DenoiserOutput<T> MlpDenoiser<T>::evaluate(const Batch<T>& x, std::span<const T> beta) const {
  return forward(x, beta, nullptr);
}

template <typename T>
void MlpDenoiser<T>::accumulate_gradient(const Batch<T>& x, std::span<const T> beta,
                                         const OutputGradient<T>& upstream,
                                         TensorMap<T>& grads) const {
  Tape tape;
  const DenoiserOutput<T> out = forward(x, beta, &tape);
  backprop(tape, out, upstream, grads);
}

template <typename T>
DenoiserOutput<T> MlpDenoiser<T>::evaluate_and_accumulate(
    const Batch<T>& x, std::span<const T> beta, const typename Denoiser<T>::UpstreamFn& upstream,
    TensorMap<T>& grads) const {
  Tape tape;
  DenoiserOutput<T> out = forward(x, beta, &tape);
  backprop(tape, out, upstream(out), grads);
  return out;
}

template <typename T>
void MlpDenoiser<T>::backprop(const Tape& tape, const DenoiserOutput<T>& out,
                              const OutputGradient<T>& upstream, TensorMap<T>& grads) const {
  const Matrix<T>& h_last = tape.last_hidden;
  Matrix<T> dh;

  auto accumulate_linear = [&](const std::string& prefix, const Matrix<T>& d_out,
                               const Matrix<T>& input) {
    as_matrix(param(grads, prefix + ".weight")).noalias() += d_out.transpose() * input;
    as_row(param(grads, prefix + ".bias")) += d_out.colwise().sum();
  };

  if (spec_.kind == KernelKind::continuous) {
    Matrix<T> d_mean = upstream.d_mean.size() ? upstream.d_mean
                                              : Matrix<T>::Zero(out.mean.rows(), out.mean.cols());
    Matrix<T> d_logvar = Matrix<T>::Zero(out.variance.rows(), out.variance.cols());
    if (upstream.d_variance.size()) {
      for (Eigen::Index r = 0; r < d_logvar.rows(); ++r) {
        for (Eigen::Index c = 0; c < d_logvar.cols(); ++c) {
          const T raw = tape.logvar_raw(r, c);
          const bool inside = raw > T(kLogVarMin) && raw < T(kLogVarMax);
          d_logvar(r, c) = inside ? upstream.d_variance(r, c) * out.variance(r, c) : T(0);
        }
      }
    }
    accumulate_linear("head.mu", d_mean, h_last);
    accumulate_linear("head.logvar", d_logvar, h_last);
    dh = d_mean * as_matrix(param(params_, std::string("head.mu.weight")));
    dh.noalias() += d_logvar * as_matrix(param(params_, std::string("head.logvar.weight")));
  } else {
    const Matrix<T> d_logits =
        grouped_softmax_backward<T>(out.probs, upstream.d_probs, spec_.categories);
    accumulate_linear("head.logits", d_logits, h_last);
    dh = d_logits * as_matrix(param(params_, std::string("head.logits.weight")));
  }

  for (std::size_t k = spec_.hidden.size(); k-- > 0;) {
    const Matrix<T>& a = tape.preactivation[k];
    Matrix<T> da = dh.binaryExpr(a, [](T g, T v) {
      const T s = sigmoid(v);
      return g * s * (T(1) + v * (T(1) - s));
    });
    as_matrix(param(grads, layer_name(k, "weight"))).noalias() += da.transpose() * tape.inputs[k];
    as_row(param(grads, layer_name(k, "bias"))) += da.colwise().sum();
    as_matrix(param(grads, emb_name(k))).noalias() += da.transpose() * tape.embedding;
    if (k > 0) dh = da * as_matrix(param(params_, layer_name(k, "weight")));
  }
}

template class MlpDenoiser<float>;
template class MlpDenoiser<double>;

}  // namespace nkca
