#include "advamc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "advamc/autodiff/ops.hpp"
#include "advamc/binary_io.hpp"
#include "advamc/dataset.hpp"
#include "advamc/models.hpp"
#include "advamc/rng.hpp"

namespace advamc {
namespace {

using ad::Tape;
using ad::TensorPtr;
using D = double;

constexpr double kStep = 1e-6;
constexpr std::size_t kMaxProbes = 48;  // coordinates checked per leaf

/// sum(w * y); gives every output element its own cotangent.
TensorPtr<D> probe(Tape<D>* tape, const TensorPtr<D>& y, const std::vector<D>& w) {
  D acc = 0;
  for (std::size_t k = 0; k < y->size(); ++k) acc += w[k] * y->data[k];
  auto out = ad::make_tensor<D>({1}, std::vector<D>{acc});
  if (tape != nullptr && tape->involve(y)) {
    tape->record(out, [y, out, w](Tape<D>& t) {
      const D g = (*t.grad(*out))[0];
      auto& gy = t.grad_buffer(*y);
      for (std::size_t k = 0; k < gy.size(); ++k) gy[k] += g * w[k];
    });
  }
  return out;
}

TensorPtr<D> random_tensor(ad::Shape shape, Rng& rng, double scale = 1.0) {
  auto t = ad::make_tensor<D>(std::move(shape));
  for (auto& v : t->data) {
    v = scale * rng.uniform(-1.0, 1.0);
    if (std::abs(v) < 1e-3) v = 0.25;  // keep away from the ReLU kink
  }
  t->requires_grad = true;
  return t;
}

using Fn = std::function<TensorPtr<D>(Tape<D>*)>;

/// Worst relative error over all leaves of one case.
double check_case(const std::vector<TensorPtr<D>>& leaves, const Fn& f, Rng& rng, bool scalar_output = false) {
  auto first = f(nullptr);
  std::vector<D> w(first->size());
  for (auto& v : w) v = scalar_output ? 1.0 : rng.uniform(-1.0, 1.0);
  const auto loss = [&](Tape<D>* t) { return probe(t, f(t), w); };

  for (auto& l : leaves) l->zero_grad();
  Tape<D> tape;
  const auto out = loss(&tape);
  if (tape.empty()) return 0.0;
  tape.backward(out);

  double worst = 0.0;
  for (const auto& leaf : leaves) {
    std::vector<std::size_t> coords(leaf->size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    if (coords.size() > kMaxProbes) {
      shuffle(coords.begin(), coords.end(), rng);
      coords.resize(kMaxProbes);
    }
    double num = 0.0, den = 0.0;
    for (auto k : coords) {
      const D saved = leaf->data[k];
      leaf->data[k] = saved + kStep;
      const D up = loss(nullptr)->data[0];
      leaf->data[k] = saved - kStep;
      const D down = loss(nullptr)->data[0];
      leaf->data[k] = saved;
      const D fd = (up - down) / (2 * kStep);
      num = std::max(num, std::abs(leaf->grad[k] - fd));
      den = std::max(den, std::abs(fd));
    }
    if (den > 1e-9) worst = std::max(worst, num / den);
    else worst = std::max(worst, num);
  }
  return worst;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform_index(hi - lo + 1); }

PrimitiveCheck run_primitive(const std::string& name, std::size_t cases, std::uint64_t seed,
                             const std::function<double(Rng&)>& one) {
  PrimitiveCheck c{name, cases, 0.0};
  for (std::size_t k = 0; k < cases; ++k) {
    Rng rng(seed, {io::fnv1a64(name), k});
    c.max_rel_error = std::max(c.max_rel_error, one(rng));
  }
  return c;
}

double model_case(const Model<float>& model, const IqSignal& signal, std::size_t label, Rng& rng) {
  const auto xf = to_batch(std::span(&signal, 1));
  const std::size_t labels[1] = {label};
  const auto analytic = input_gradient(model, *xf, labels);
  const auto md = model.cast<double>();
  auto xd = ad::make_tensor<D>(xf->shape, std::vector<D>(xf->data.begin(), xf->data.end()));
  std::vector<std::size_t> coords(xd->size());
  for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
  shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min<std::size_t>(coords.size(), 64));
  double num = 0.0, den = 0.0;
  for (auto k : coords) {
    const D saved = xd->data[k];
    xd->data[k] = saved + kStep;
    const D up = ad::cross_entropy_per_sample(*predict(md, xd), labels)[0];
    xd->data[k] = saved - kStep;
    const D down = ad::cross_entropy_per_sample(*predict(md, xd), labels)[0];
    xd->data[k] = saved;
    const D fd = (up - down) / (2 * kStep);
    num = std::max(num, std::abs(static_cast<D>(analytic.grad.data[k]) - fd));
    den = std::max(den, std::abs(fd));
  }
  return den > 1e-9 ? num / den : num;
}

}  // namespace

double GradcheckReport::primitive_max_rel_error() const {
  double m = 0.0;
  for (const auto& p : primitives) m = std::max(m, p.max_rel_error);
  return m;
}

bool GradcheckReport::passed(double primitive_tol, double model_tol) const {
  return primitive_max_rel_error() < primitive_tol && model_input_max_rel_error < model_tol;
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json prims = nlohmann::json::object();
  for (const auto& p : primitives) prims[p.primitive] = {{"cases", p.cases}, {"max_rel_error", p.max_rel_error}};
  return {{"primitives", prims},
          {"primitive_max_rel_error", primitive_max_rel_error()},
          {"model_cases", model_cases},
          {"model_input_max_rel_error", model_input_max_rel_error},
          {"passed", passed()}};
}

GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t cases, std::size_t model_cases) {
  GradcheckReport rep;
  rep.primitives.push_back(run_primitive("conv2d", cases, seed, [](Rng& rng) {
    const std::size_t b = pick(rng, 1, 2), c = pick(rng, 1, 3), o = pick(rng, 1, 3);
    const std::size_t kh = pick(rng, 1, 2), kw = pick(rng, 1, 3);
    ad::Conv2dGeometry g{pick(rng, 0, 1), pick(rng, 0, 2), pick(rng, 1, 2), pick(rng, 1, 2)};
    const std::size_t h = pick(rng, kh > 2 * g.pad_h ? kh - 2 * g.pad_h : 1, 3);
    const std::size_t w = pick(rng, std::max<std::size_t>(kw, 2), 7);
    auto x = random_tensor({b, c, h, w}, rng);
    auto k = random_tensor({o, c, kh, kw}, rng);
    auto bias = random_tensor({o}, rng);
    return check_case({x, k, bias}, [=](Tape<D>* t) { return ad::conv2d(t, x, k, bias, g); }, rng);
  }));
  rep.primitives.push_back(run_primitive("dense", cases, seed, [](Rng& rng) {
    const std::size_t b = pick(rng, 1, 4), f = pick(rng, 1, 9), o = pick(rng, 1, 6);
    auto x = random_tensor({b, f}, rng);
    auto w = random_tensor({o, f}, rng);
    auto bias = random_tensor({o}, rng);
    return check_case({x, w, bias}, [=](Tape<D>* t) { return ad::dense(t, x, w, bias); }, rng);
  }));
  rep.primitives.push_back(run_primitive("relu", cases, seed, [](Rng& rng) {
    auto x = random_tensor({pick(rng, 1, 3), pick(rng, 1, 12)}, rng);
    return check_case({x}, [=](Tape<D>* t) { return ad::relu(t, x); }, rng);
  }));
  rep.primitives.push_back(run_primitive("dropout", cases, seed, [](Rng& rng) {
    auto x = random_tensor({pick(rng, 1, 3), pick(rng, 1, 12)}, rng);
    const double p = rng.uniform(0.0, 0.8);
    const std::uint64_t mask = rng.next_u64();
    return check_case({x}, [=](Tape<D>* t) { return ad::dropout(t, x, p, mask, true); }, rng);
  }));
  rep.primitives.push_back(run_primitive("flatten", cases, seed, [](Rng& rng) {
    auto x = random_tensor({pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4)}, rng);
    return check_case({x}, [=](Tape<D>* t) { return ad::flatten(t, x); }, rng);
  }));
  rep.primitives.push_back(run_primitive("reshape", cases, seed, [](Rng& rng) {
    const std::size_t b = pick(rng, 1, 3), n = pick(rng, 1, 6);
    auto x = random_tensor({b, 2 * n}, rng);
    return check_case({x}, [=](Tape<D>* t) { return ad::reshape(t, x, {b, 1, 2, n}); }, rng);
  }));
  rep.primitives.push_back(run_primitive("add", cases, seed, [](Rng& rng) {
    const ad::Shape s{pick(rng, 1, 3), pick(rng, 1, 8)};
    auto a = random_tensor(s, rng);
    auto b = random_tensor(s, rng);
    return check_case({a, b}, [=](Tape<D>* t) { return ad::add(t, a, b); }, rng);
  }));
  rep.primitives.push_back(run_primitive("sum", cases, seed, [](Rng& rng) {
    auto x = random_tensor({pick(rng, 1, 4), pick(rng, 1, 8)}, rng);
    return check_case({x}, [=](Tape<D>* t) { return ad::sum(t, x); }, rng, true);
  }));
  for (auto red : {ad::Reduction::mean, ad::Reduction::sum}) {
    const std::string name = red == ad::Reduction::mean ? "softmax_cross_entropy_mean" : "softmax_cross_entropy_sum";
    rep.primitives.push_back(run_primitive(name, cases, seed, [red](Rng& rng) {
      const std::size_t b = pick(rng, 1, 5), k = pick(rng, 2, 8);
      auto z = random_tensor({b, k}, rng, 4.0);
      std::vector<std::size_t> y(b);
      for (auto& v : y) v = rng.uniform_index(k);
      return check_case({z}, [=](Tape<D>* t) { return ad::softmax_cross_entropy(t, z, y, red); }, rng, true);
    }));
  }

  if (model_cases > 0) {
    DatasetSpec spec = crml_tiny_spec(seed);
    spec.signals_per_class = 1;
    const auto ds = generate(spec);
    const auto cnn = build_vt_cnn(ds.n_classes(), spec.samples_per_signal, 0.125, seed);
    const auto res = build_resnet(ds.n_classes(), spec.samples_per_signal, 3, 8, seed);
    for (std::size_t k = 0; k < model_cases; ++k) {
      Rng rng(seed, {0x6d6f64, k});
      const std::size_t j = k % ds.size();
      const auto& model = k % 2 == 0 ? cnn : res;
      rep.model_input_max_rel_error =
          std::max(rep.model_input_max_rel_error, model_case(model, ds.signals[j], ds.labels[j], rng));
    }
    rep.model_cases = model_cases;
  }
  return rep;
}

}  // namespace advamc
