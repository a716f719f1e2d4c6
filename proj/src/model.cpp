#include "mdet/model.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mdet {
namespace {

Tensor<double> uniform(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Index k = 0; k < t.size(); ++k) t[k] = dist(rng);
  return t;
}

Tensor<double> normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index k = 0; k < t.size(); ++k) t[k] = dist(rng);
  return t;
}

void add_linear(ParameterStore& store, const std::string& prefix, Index in, Index out, std::mt19937_64& rng,
                const std::string& suffix = "") {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(prefix + "/w" + suffix, uniform({in, out}, -bound, bound, rng));
  store.add(prefix + "/b" + suffix, Tensor<double>(Shape{out}));
}

void add_mlp(ParameterStore& store, const std::string& prefix, Index in, Index hidden, Index out,
             std::mt19937_64& rng) {
  add_linear(store, prefix, in, hidden, rng, "0");
  add_linear(store, prefix, hidden, out, rng, "1");
}

void add_norm(ParameterStore& store, const std::string& prefix, Index width, bool affine) {
  if (!affine) return;
  store.add(prefix + "/gamma", Tensor<double>::constant({width}, 1.0));
  store.add(prefix + "/beta", Tensor<double>(Shape{width}));
}

std::vector<double> geometric_frequencies(Index n_fourier, double base) {
  const Index half = n_fourier / 2;
  std::vector<double> out(static_cast<std::size_t>(half));
  const double denom = static_cast<double>(half - 1);
  for (Index k = 0; k < half; ++k) {
    const double exponent = half > 1 ? static_cast<double>(k) / denom : 0.0;
    out[static_cast<std::size_t>(k)] = std::numbers::pi * std::pow(1.0 / base, exponent);
  }
  return out;
}

template <typename S>
std::vector<S> cast_vector(const std::vector<double>& v) {
  return std::vector<S>(v.begin(), v.end());
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (embed_dim < 1 || n_layers < 0 || n_heads < 1 || ffn_multiplier < 1) fail("sizes must be positive");
  if (embed_dim % n_heads != 0) fail("embed_dim must be divisible by n_heads");
  if (n_rbf < 1) fail("n_rbf must be at least 1");
  if (n_fourier < 2 || n_fourier % 2 != 0) fail("n_fourier must be even and at least 2");
  if (atom_vocab < 2 || spin_vocab < 1 || charge_vocab < 1) fail("vocabulary sizes must be positive");
}

ModelConfig ModelConfig::paper() {
  ModelConfig cfg;
  cfg.embed_dim = 192;
  cfg.n_layers = 12;
  cfg.n_heads = 12;
  cfg.ffn_multiplier = 4;
  cfg.n_rbf = 128;
  cfg.n_fourier = 128;
  return cfg;
}

const std::set<std::string>& ModelConfig::keys() {
  static const std::set<std::string> k{"embed_dim",   "n_layers",   "n_heads",    "ffn_multiplier",
                                       "n_rbf",       "n_fourier",  "atom_vocab", "spin_vocab",
                                       "charge_vocab", "layer_norm_affine"};
  return k;
}

ModelConfig ModelConfig::from_kv(const KeyValueConfig& kv, ModelConfig cfg) {
  cfg.embed_dim = kv.get_int("embed_dim", cfg.embed_dim);
  cfg.n_layers = kv.get_int("n_layers", cfg.n_layers);
  cfg.n_heads = kv.get_int("n_heads", cfg.n_heads);
  cfg.ffn_multiplier = kv.get_int("ffn_multiplier", cfg.ffn_multiplier);
  cfg.n_rbf = kv.get_int("n_rbf", cfg.n_rbf);
  cfg.n_fourier = kv.get_int("n_fourier", cfg.n_fourier);
  cfg.atom_vocab = kv.get_int("atom_vocab", cfg.atom_vocab);
  cfg.spin_vocab = kv.get_int("spin_vocab", cfg.spin_vocab);
  cfg.charge_vocab = kv.get_int("charge_vocab", cfg.charge_vocab);
  cfg.layer_norm_affine = kv.get_bool("layer_norm_affine", cfg.layer_norm_affine);
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::from_kv(const KeyValueConfig& kv) { return from_kv(kv, ModelConfig{}); }

KeyValueConfig ModelConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("embed_dim", std::to_string(embed_dim));
  kv.set("n_layers", std::to_string(n_layers));
  kv.set("n_heads", std::to_string(n_heads));
  kv.set("ffn_multiplier", std::to_string(ffn_multiplier));
  kv.set("n_rbf", std::to_string(n_rbf));
  kv.set("n_fourier", std::to_string(n_fourier));
  kv.set("atom_vocab", std::to_string(atom_vocab));
  kv.set("spin_vocab", std::to_string(spin_vocab));
  kv.set("charge_vocab", std::to_string(charge_vocab));
  kv.set("layer_norm_affine", layer_norm_affine ? "true" : "false");
  return kv;
}

std::vector<double> azimuth_frequencies(Index n_fourier) {
  return geometric_frequencies(n_fourier, 2.0 * std::numbers::pi);
}

std::vector<double> polar_frequencies(Index n_fourier) { return geometric_frequencies(n_fourier, std::numbers::pi); }

ParameterStore init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParameterStore store;
  const Index d = cfg.embed_dim;
  const double table_std = 1.0 / std::sqrt(static_cast<double>(d));

  store.add("embed/atom", normal({cfg.atom_vocab, d}, table_std, rng));
  store.add("embed/spin", normal({cfg.spin_vocab, d}, table_std, rng));
  store.add("embed/charge", normal({cfg.charge_vocab, d}, table_std, rng));
  add_mlp(store, "embed/edge_mlp", 2 * d, d, d, rng);

  store.add("embed/rbf/mu", uniform({cfg.n_rbf}, 0.0, 7.0, rng));
  Tensor<double> sigma = uniform({cfg.n_rbf}, 0.0, 3.0, rng);
  sigma.array() = sigma.array().max(0.1);
  store.add("embed/rbf/sigma", std::move(sigma));
  store.add("embed/rbf/scale", Tensor<double>::scalar(1.0));
  store.add("embed/rbf/shift", Tensor<double>::scalar(0.0));
  add_mlp(store, "embed/dist_mlp", cfg.n_rbf, d, d, rng);
  add_linear(store, "embed/dir", 2 * cfg.n_fourier, d, rng);

  for (Index l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layers/" + std::to_string(l);
    add_norm(store, p + "/norm1", d, cfg.layer_norm_affine);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (const char* name : {"wq", "wk", "wv1", "wv2"}) {
      store.add(p + "/attn/" + name, uniform({d, d}, -bound, bound, rng));
    }
    add_linear(store, p + "/attn/out", d, d, rng);
    add_norm(store, p + "/norm2", d, cfg.layer_norm_affine);
    add_mlp(store, p + "/ffn", d, cfg.ffn_multiplier * d, d, rng);
  }

  add_mlp(store, "head/psi1", d, d, d, rng);
  add_mlp(store, "head/psi2", d, d, d, rng);
  add_mlp(store, "head/psi3", d, d, 3, rng);
  return store;
}

template <typename S>
MdEt<S>::MdEt(ModelConfig cfg, const ParameterStore& params)
    : cfg_(cfg),
      store_(&params),
      omega_phi_(cast_vector<S>(azimuth_frequencies(cfg.n_fourier))),
      omega_theta_(cast_vector<S>(polar_frequencies(cfg.n_fourier))) {
  cfg_.validate();
  for (std::size_t k = 0; k < params.entries().size(); ++k) slot_.emplace(params.entries()[k].path, k);
}

template <typename S>
Var<S> MdEt<S>::param(const Forward& fw, const std::string& path) const {
  auto it = slot_.find(path);
  if (it == slot_.end()) throw std::out_of_range("model: missing parameter " + path);
  return fw.params[it->second];
}

template <typename S>
Var<S> MdEt<S>::mlp(Forward& fw, Var<S> x, const std::string& prefix) const {
  Var<S> h = ops::gelu(ops::linear(x, param(fw, prefix + "/w0"), param(fw, prefix + "/b0")));
  return ops::linear(h, param(fw, prefix + "/w1"), param(fw, prefix + "/b1"));
}

template <typename S>
Var<S> MdEt<S>::norm(Forward& fw, Var<S> x, const std::string& prefix) const {
  Var<S> y = ops::layer_norm(x);
  if (!cfg_.layer_norm_affine) return y;
  return ops::bias_add(ops::scale_lastaxis(y, param(fw, prefix + "/gamma")), param(fw, prefix + "/beta"));
}

template <typename S>
Var<S> MdEt<S>::embed(Forward& fw, const MolecularSystem& system) const {
  const Index n = system.size();
  for (int z : system.atomic_numbers) {
    if (z < 0 || z >= cfg_.atom_vocab) {
      throw VocabularyError("atomic number " + std::to_string(z) + " outside vocabulary of " +
                            std::to_string(cfg_.atom_vocab));
    }
  }
  if (system.spin < 0 || system.spin >= cfg_.spin_vocab) {
    throw VocabularyError("spin " + std::to_string(system.spin) + " outside vocabulary of " +
                          std::to_string(cfg_.spin_vocab));
  }
  const Index charge_row = system.charge + cfg_.charge_vocab / 2;
  if (charge_row < 0 || charge_row >= cfg_.charge_vocab) {
    throw VocabularyError("charge " + std::to_string(system.charge) + " outside vocabulary of " +
                          std::to_string(cfg_.charge_vocab));
  }

  Var<S> geometry = ops::edge_geometry(fw.positions);
  Var<S> rbf = ops::gaussian_rbf(ops::column(geometry, 0), param(fw, "embed/rbf/mu"), param(fw, "embed/rbf/sigma"),
                                 param(fw, "embed/rbf/scale"), param(fw, "embed/rbf/shift"));
  Var<S> radial = mlp(fw, rbf, "embed/dist_mlp");
  Var<S> fourier = ops::fourier_features(ops::column(geometry, 1), ops::column(geometry, 2), omega_phi_, omega_theta_);
  Var<S> directional = ops::linear(fourier, param(fw, "embed/dir/w"), param(fw, "embed/dir/b"));

  Var<S> spin_charge = ops::gather_rows(param(fw, "embed/spin"), {static_cast<Index>(system.spin)}) +
                       ops::gather_rows(param(fw, "embed/charge"), {charge_row});
  std::vector<Index> z(system.atomic_numbers.begin(), system.atomic_numbers.end());
  Var<S> atoms = ops::bias_add(ops::gather_rows(param(fw, "embed/atom"), z), spin_charge);

  std::vector<Index> row_atom, col_atom;
  row_atom.reserve(static_cast<std::size_t>(n * n));
  col_atom.reserve(static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      row_atom.push_back(i);
      col_atom.push_back(j);
    }
  Var<S> pair = ops::concat_lastaxis(ops::gather_rows(atoms, row_atom), ops::gather_rows(atoms, col_atom));
  Var<S> edge = mlp(fw, pair, "embed/edge_mlp");

  return ops::reshape(edge + radial + directional, Shape{n, n, cfg_.embed_dim});
}

template <typename S>
Var<S> MdEt<S>::tria_attention(Forward& fw, Var<S> x, Index layer) const {
  const std::string p = "layers/" + std::to_string(layer) + "/attn/";
  Var<S> q = ops::linear(x, param(fw, p + "wq"));
  Var<S> k = ops::linear(x, param(fw, p + "wk"));
  Var<S> v1 = ops::linear(x, param(fw, p + "wv1"));
  Var<S> v2 = ops::linear(x, param(fw, p + "wv2"));
  const S factor = S(1) / std::sqrt(static_cast<S>(cfg_.embed_dim / cfg_.n_heads));
  Var<S> scores = ops::triangle_scores(q, k, cfg_.n_heads, factor);
  if (!scores.value().all_finite()) {
    throw FiniteValueError("non-finite attention logits in layer " + std::to_string(layer));
  }
  Var<S> mixed = ops::triangle_mix(ops::softmax_lastaxis(scores), v1, v2);
  return ops::linear(mixed, param(fw, p + "out/w"), param(fw, p + "out/b"));
}

template <typename S>
Var<S> MdEt<S>::et_layer(Forward& fw, Var<S> x, Index layer) const {
  const std::string p = "layers/" + std::to_string(layer);
  Var<S> h = x + tria_attention(fw, norm(fw, x, p + "/norm1"), layer);
  return h + mlp(fw, norm(fw, h, p + "/norm2"), p + "/ffn");
}

template <typename S>
Var<S> MdEt<S>::force_head(Forward& fw, Var<S> x) const {
  // Row aggregation Σ_l ψ1(x_il) plus column aggregation Σ_l ψ2(x_li).
  Var<S> rows = ops::sum_axis(mlp(fw, x, "head/psi1"), 1);
  Var<S> cols = ops::sum_axis(mlp(fw, x, "head/psi2"), 0);
  return mlp(fw, rows + cols, "head/psi3");
}

template <typename S>
std::unique_ptr<typename MdEt<S>::Forward> MdEt<S>::forward(const MolecularSystem& system, Options options) const {
  system.validate();
  auto fw = std::make_unique<Forward>();
  fw->params.reserve(store_->size());
  for (const auto& e : store_->entries()) {
    Tensor<S> v = e.value.template cast<S>();
    fw->params.push_back(options.params_require_grad ? fw->tape.variable(std::move(v))
                                                     : fw->tape.constant(std::move(v)));
  }
  Tensor<S> pos(Shape{system.size(), 3});
  for (Index i = 0; i < system.size(); ++i)
    for (Index c = 0; c < 3; ++c) pos.matrix()(i, c) = static_cast<S>(system.positions(i, c));
  fw->positions = options.positions_require_grad ? fw->tape.variable(std::move(pos)) : fw->tape.constant(std::move(pos));

  fw->edges = embed(*fw, system);
  Var<S> x = fw->edges;
  for (Index l = 0; l < cfg_.n_layers; ++l) x = et_layer(*fw, x, l);
  fw->output = x;
  fw->forces = force_head(*fw, x);
  if (!fw->forces.value().all_finite()) throw FiniteValueError("non-finite force prediction");
  return fw;
}

template <typename S>
Forces MdEt<S>::predict_forces(const MolecularSystem& system) const {
  auto fw = forward(system);
  return fw->forces.value().matrix().template cast<double>();
}

template <typename S>
Eigen::MatrixXd MdEt<S>::position_jacobian(const MolecularSystem& system) const {
  auto fw = forward(system, Options{false, true});
  const Index dim = 3 * system.size();
  Eigen::MatrixXd jac(dim, dim);
  Tensor<S> seed(fw->forces.shape());
  for (Index a = 0; a < dim; ++a) {
    seed.array().setZero();
    seed[a] = S(1);
    fw->tape.backward(fw->forces, seed);
    jac.row(a) = fw->tape.grad(fw->positions).array().template cast<double>().matrix().transpose();
  }
  if (!jac.allFinite()) throw FiniteValueError("non-finite entries in force Jacobian");
  return jac;
}

template <typename S>
void MdEt<S>::accumulate_gradients(const Forward& fw, GradientBuffer& out) const {
  for (std::size_t k = 0; k < fw.params.size(); ++k) {
    out.grads[k].array() += fw.tape.grad(fw.params[k]).array().template cast<double>();
  }
}

template <typename S>
Var<S> force_loss(Var<S> pred, Var<S> target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("force_loss: prediction " + shape_string(pred.shape()) + " vs target " +
                         shape_string(target.shape()));
  }
  return ops::mean(ops::row_norms(pred - target));
}

double force_loss(const Forces& pred, const Forces& target) {
  if (pred.rows() != target.rows()) {
    throw DimensionError("force_loss: " + std::to_string(pred.rows()) + " vs " + std::to_string(target.rows()) +
                         " atoms");
  }
  return (pred - target).rowwise().norm().mean();
}

template class MdEt<float>;
template class MdEt<double>;
template Var<float> force_loss(Var<float>, Var<float>);
template Var<double> force_loss(Var<double>, Var<double>);

}  // namespace mdet
