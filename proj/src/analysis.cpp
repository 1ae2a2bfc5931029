#include "advamc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "advamc/binary_io.hpp"
#include "advamc/error.hpp"

namespace advamc {
namespace {

std::vector<cdouble> estimates(const IqSignal& s, std::size_t sps) {
  IqSignal view;
  view.samples_per_symbol = sps;
  view.i = s.i;
  view.q = s.q;
  return symbol_estimates(view);
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

IqSignal broadcast(const std::vector<cdouble>& shifts, const IqSignal& like) {
  const std::size_t sps = like.samples_per_symbol;
  IqSignal d;
  d.samples_per_symbol = sps;
  d.i.resize(like.size());
  d.q.resize(like.size());
  for (std::size_t k = 0; k < shifts.size(); ++k) {
    for (std::size_t t = k * sps; t < (k + 1) * sps; ++t) {
      d.i[t] = static_cast<float>(shifts[k].real());
      d.q[t] = static_cast<float>(shifts[k].imag());
    }
  }
  return d;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("alignment operands differ in length");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0.0 || bb == 0.0) throw ZeroPerturbation("alignment of an all-zero perturbation");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

std::vector<double> flat(const IqSignal& s) {
  std::vector<double> v(s.i.begin(), s.i.end());
  v.insert(v.end(), s.q.begin(), s.q.end());
  return v;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void MlModelPrior::validate() const {
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance)) throw ConfigError("noise variance must be > 0");
  if (samples_per_symbol == 0) throw ConfigError("samples_per_symbol must be >= 1");
  if (candidates.empty()) throw ConfigError("ML prior needs at least one candidate");
  for (const auto& c : candidates)
    if (c.states.empty()) throw ConfigError("candidate '" + c.scheme_name + "' has no states");
}

MlModelPrior ml_prior(std::span<const std::string> schemes, double snr_db, std::size_t sps) {
  MlModelPrior p;
  for (const auto& s : schemes) p.candidates.push_back(constellation(s));
  p.noise_variance = 1.0 / (2.0 * std::pow(10.0, snr_db / 10.0));
  p.samples_per_symbol = sps;
  p.validate();
  return p;
}

MlDecision ml_classify(const IqSignal& signal, const MlModelPrior& prior) {
  prior.validate();
  if (signal.q.size() != signal.i.size()) throw ShapeError("I and Q planes differ in length");
  const auto y = estimates(signal, prior.samples_per_symbol);
  const double var_sym = prior.noise_variance / static_cast<double>(prior.samples_per_symbol);
  MlDecision d;
  std::vector<double> terms;
  for (const auto& c : prior.candidates) {
    const double log_prior = std::log(static_cast<double>(c.size()));
    double ll = 0.0;
    terms.resize(c.size());
    for (const auto& yk : y) {
      for (std::size_t s = 0; s < c.size(); ++s) terms[s] = -std::norm(yk - c.states[s]) / (2.0 * var_sym);
      ll += log_sum_exp(terms) - log_prior;
    }
    d.log_likelihoods.push_back(ll);
  }
  d.predicted = static_cast<std::size_t>(
      std::max_element(d.log_likelihoods.begin(), d.log_likelihoods.end()) - d.log_likelihoods.begin());
  return d;
}

std::size_t nearest_state(const Constellation& c, cdouble point) {
  if (c.states.empty()) throw ConfigError("constellation '" + c.scheme_name + "' has no states");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < c.size(); ++s) {
    const double d = std::norm(point - c.states[s]);
    if (d < best_d) {
      best_d = d;
      best = s;
    }
  }
  return best;
}

Perturbation oracle_targeted_perturbation(const IqSignal& signal, const Constellation& target, double epsilon,
                                          BudgetMode mode) {
  if (target.states.empty()) throw ConfigError("target constellation '" + target.scheme_name + "' has no states");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  const auto y = symbol_estimates(signal);
  std::vector<cdouble> v(y.size());
  double peak = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    v[k] = target.states[nearest_state(target, y[k])] - y[k];
    peak = std::max({peak, std::abs(v[k].real()), std::abs(v[k].imag())});
  }
  if (mode == BudgetMode::global_scale) {
    const double scale = peak > epsilon ? epsilon / peak : 1.0;
    for (auto& s : v) s *= scale;
  } else {
    for (auto& s : v) s = {std::clamp(s.real(), -epsilon, epsilon), std::clamp(s.imag(), -epsilon, epsilon)};
  }
  Perturbation p;
  p.delta = broadcast(v, signal);
  project_linf(p.delta.i, epsilon);
  project_linf(p.delta.q, epsilon);
  p.epsilon = epsilon;
  return p;
}

double alignment(std::span<const float> a, std::span<const float> b) {
  const std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
  return cosine(da, db);
}

double alignment(const IqSignal& a, const IqSignal& b) {
  if (a.size() != b.size() || a.q.size() != b.q.size()) throw ShapeError("alignment operands differ in length");
  return cosine(flat(a), flat(b));
}

double symbol_shift_alignment(const IqSignal& a, const IqSignal& b) {
  if (a.size() != b.size()) throw ShapeError("alignment operands differ in length");
  const auto ea = symbol_estimates(a), eb = symbol_estimates(b);
  std::vector<double> fa, fb;
  for (std::size_t k = 0; k < ea.size(); ++k) {
    fa.insert(fa.end(), {ea[k].real(), ea[k].imag()});
    fb.insert(fb.end(), {eb[k].real(), eb[k].imag()});
  }
  return cosine(fa, fb);
}

double mean_distance_to_states(std::span<const cdouble> points, const Constellation& c) {
  if (points.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& p : points) acc += std::abs(p - c.states[nearest_state(c, p)]);
  return acc / static_cast<double>(points.size());
}

ConstellationPlot constellation_plot(const IqSignal& signal, const IqSignal& perturbed, const Constellation& target,
                                     std::string title) {
  if (signal.size() != perturbed.size() || signal.samples_per_symbol != perturbed.samples_per_symbol) {
    throw ShapeError("original and perturbed signals differ in shape");
  }
  ConstellationPlot p;
  p.original = symbol_estimates(signal);
  p.perturbed = symbol_estimates(perturbed);
  p.target_states = target.states;
  p.target_name = target.scheme_name;
  p.title = std::move(title);
  return p;
}

std::string to_csv(const ConstellationPlot& plot) {
  std::ostringstream os;
  os << "symbol_idx,orig_i,orig_q,pert_i,pert_q\n";
  for (std::size_t k = 0; k < plot.original.size(); ++k) {
    os << k << ',' << num(plot.original[k].real()) << ',' << num(plot.original[k].imag()) << ','
       << num(plot.perturbed[k].real()) << ',' << num(plot.perturbed[k].imag()) << '\n';
  }
  return os.str();
}

std::string to_svg(const ConstellationPlot& plot) {
  constexpr double kSize = 480.0, kMargin = 40.0, kRange = 1.6;
  const double span = kSize - 2 * kMargin;
  const auto px = [&](double v) { return kMargin + (std::clamp(v, -kRange, kRange) + kRange) / (2 * kRange) * span; };
  const auto py = [&](double v) { return kMargin + (kRange - std::clamp(v, -kRange, kRange)) / (2 * kRange) * span; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\" viewBox=\"0 0 "
     << kSize << ' ' << kSize << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << span << "\" height=\"" << span
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << px(-kRange) << "\" y1=\"" << py(0) << "\" x2=\"" << px(kRange) << "\" y2=\"" << py(0)
     << "\" stroke=\"#bbb\"/>\n";
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(-kRange) << "\" x2=\"" << px(0) << "\" y2=\"" << py(kRange)
     << "\" stroke=\"#bbb\"/>\n";
  for (double t : {-1.6, -0.8, 0.0, 0.8, 1.6}) {
    os << "<text x=\"" << px(t) << "\" y=\"" << kSize - 12 << "\" font-size=\"11\" text-anchor=\"middle\">" << t
       << "</text>\n";
    os << "<text x=\"" << 8 << "\" y=\"" << py(t) + 4 << "\" font-size=\"11\">" << t << "</text>\n";
  }
  if (!plot.title.empty()) {
    os << "<text x=\"" << kSize / 2 << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">" << plot.title
       << "</text>\n";
  }
  os << "<g fill=\"#e6b800\" fill-opacity=\"0.7\">\n";
  for (const auto& p : plot.original)
    os << "<circle cx=\"" << num(px(p.real())) << "\" cy=\"" << num(py(p.imag())) << "\" r=\"3\"/>\n";
  os << "</g>\n<g fill=\"#1f4fd1\" fill-opacity=\"0.7\">\n";
  for (const auto& p : plot.perturbed)
    os << "<circle cx=\"" << num(px(p.real())) << "\" cy=\"" << num(py(p.imag())) << "\" r=\"3\"/>\n";
  os << "</g>\n<g stroke=\"red\" stroke-width=\"2\">\n";
  for (const auto& p : plot.target_states) {
    const double x = px(p.real()), y = py(p.imag());
    os << "<line x1=\"" << num(x - 6) << "\" y1=\"" << num(y - 6) << "\" x2=\"" << num(x + 6) << "\" y2=\""
       << num(y + 6) << "\"/><line x1=\"" << num(x - 6) << "\" y1=\"" << num(y + 6) << "\" x2=\"" << num(x + 6)
       << "\" y2=\"" << num(y - 6) << "\"/>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

ConstellationPlot constellation_export(const IqSignal& signal, const IqSignal& perturbed, const Constellation& target,
                                       const std::filesystem::path& stem, std::string title) {
  auto plot = constellation_plot(signal, perturbed, target, std::move(title));
  auto csv = stem, svg = stem;
  csv += ".csv";
  svg += ".svg";
  io::write_text(csv, to_csv(plot));
  io::write_text(svg, to_svg(plot));
  return plot;
}

json AlignmentReport::to_json() const {
  json per_class = json::object();
  std::map<std::size_t, std::vector<const AlignmentSample*>> groups;
  for (const auto& s : samples) groups[s.label].push_back(&s);
  for (const auto& [label, members] : groups) {
    double as = 0, ar = 0, ss = 0, sr = 0;
    for (const auto* m : members) {
      as += m->alignment_standard;
      ar += m->alignment_robust;
      ss += m->shift_standard;
      sr += m->shift_robust;
    }
    const double n = static_cast<double>(members.size());
    const std::string name = label < class_names.size() ? class_names[label] : std::to_string(label);
    per_class[name] = {{"n", members.size()},
                       {"alignment_standard", as / n},
                       {"alignment_robust", ar / n},
                       {"shift_standard", ss / n},
                       {"shift_robust", sr / n}};
  }
  double sym_s = 0, sym_r = 0;
  for (const auto& s : samples) {
    sym_s += s.symbol_alignment_standard;
    sym_r += s.symbol_alignment_robust;
  }
  const double n = samples.empty() ? 1.0 : static_cast<double>(samples.size());
  return {{"target_class", target_class},
          {"target_name", target_name},
          {"spr_db", spr_db},
          {"n_signals", samples.size()},
          {"mean_alignment_standard", mean_alignment_standard},
          {"mean_alignment_robust", mean_alignment_robust},
          {"mean_symbol_alignment_standard", sym_s / n},
          {"mean_symbol_alignment_robust", sym_r / n},
          {"mean_shift_standard", mean_shift_standard},
          {"mean_shift_robust", mean_shift_robust},
          {"per_class", per_class}};
}

std::string AlignmentReport::to_csv() const {
  std::ostringstream os;
  os << "index,label,alignment_standard,alignment_robust,symbol_alignment_standard,symbol_alignment_robust,"
        "shift_standard,shift_robust,shift_oracle\n";
  for (const auto& s : samples) {
    os << s.index << ',' << (s.label < class_names.size() ? class_names[s.label] : std::to_string(s.label)) << ','
       << num(s.alignment_standard) << ',' << num(s.alignment_robust) << ',' << num(s.symbol_alignment_standard) << ','
       << num(s.symbol_alignment_robust) << ',' << num(s.shift_standard) << ',' << num(s.shift_robust) << ','
       << num(s.shift_oracle) << '\n';
  }
  return os.str();
}

AlignmentReport alignment_study(const Model<float>& standard, const Model<float>& robust, const LabeledDataset& ds,
                                std::span<const std::size_t> idx, std::size_t target_class, double spr_db) {
  if (target_class >= ds.n_classes()) throw LabelError("target class out of range");
  const Constellation target = constellation(ds.class_names[target_class]);
  std::vector<std::size_t> keep;
  for (auto k : idx)
    if (ds.labels[k] != target_class) keep.push_back(k);

  std::vector<IqSignal> signals;
  std::vector<std::size_t> labels;
  for (auto k : keep) {
    signals.push_back(ds.signals[k]);
    labels.push_back(ds.labels[k]);
  }
  AttackConfig cfg = AttackConfig::fgsm_at(spr_db);
  cfg.target = target_class;
  const auto std_attack = attack_batch(standard, signals, labels, cfg);
  const auto rob_attack = attack_batch(robust, signals, labels, cfg);

  AlignmentReport r;
  r.target_class = target_class;
  r.target_name = target.scheme_name;
  r.spr_db = spr_db;
  r.class_names = ds.class_names;
  const auto drop = [&](const IqSignal& x, const IqSignal& d) {
    IqSignal moved = x;
    for (std::size_t t = 0; t < x.size(); ++t) {
      moved.i[t] += d.i[t];
      moved.q[t] += d.q[t];
    }
    return mean_distance_to_states(symbol_estimates(x), target) -
           mean_distance_to_states(symbol_estimates(moved), target);
  };
  for (std::size_t n = 0; n < keep.size(); ++n) {
    const auto& x = signals[n];
    const double eps = spr_to_epsilon(x, spr_db);
    const auto oracle = oracle_targeted_perturbation(x, target, eps);
    const auto& ds_ = std_attack.perturbations[n].delta;
    const auto& dr_ = rob_attack.perturbations[n].delta;
    AlignmentSample s;
    s.index = keep[n];
    s.label = labels[n];
    try {
      s.alignment_standard = alignment(ds_, oracle.delta);
      s.alignment_robust = alignment(dr_, oracle.delta);
      s.symbol_alignment_standard = symbol_shift_alignment(ds_, oracle.delta);
      s.symbol_alignment_robust = symbol_shift_alignment(dr_, oracle.delta);
    } catch (const ZeroPerturbation&) {
      continue;
    }
    s.shift_standard = drop(x, ds_);
    s.shift_robust = drop(x, dr_);
    s.shift_oracle = drop(x, oracle.delta);
    r.samples.push_back(s);
  }
  for (const auto& s : r.samples) {
    r.mean_alignment_standard += s.alignment_standard;
    r.mean_alignment_robust += s.alignment_robust;
    r.mean_shift_standard += s.shift_standard;
    r.mean_shift_robust += s.shift_robust;
  }
  if (!r.samples.empty()) {
    const double n = static_cast<double>(r.samples.size());
    r.mean_alignment_standard /= n;
    r.mean_alignment_robust /= n;
    r.mean_shift_standard /= n;
    r.mean_shift_robust /= n;
  }
  return r;
}

}  // namespace advamc
