#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <relu_lawn.hpp>

namespace fs = std::filesystem;
using namespace relu_lawn;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::uint64_t fnv1a(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Everything a run needs to leave behind in its manifest.
struct Run {
  CLI::App* app = nullptr;
  std::size_t threads = 0;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  Json results = Json::object();

  fs::path input(const std::string& p) {
    inputs.emplace_back(p);
    return inputs.back();
  }
  fs::path output(const std::string& p) {
    outputs.emplace_back(p);
    return outputs.back();
  }
};

Json resolved_config(const CLI::App* app) {
  Json cfg = Json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (res.empty())
        cfg[name] = "true";
      else if (res.size() == 1)
        cfg[name] = res.front();
      else
        cfg[name] = res;
    } else if (opt->get_type_size_max() == 0 || opt->get_items_expected_max() == 0) {
      cfg[name] = "false";
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

void write_manifest(const Run& run, const fs::path& path, double seconds) {
  Json m;
  m["command"] = run.app->get_name();
  m["config"] = resolved_config(run.app);
  Json seeds = Json::object();
  for (const auto& [k, v] : m["config"].items())
    if (k.find("seed") != std::string::npos) seeds[k] = v;
  m["seeds"] = seeds;
  m["threads"] = resolve_threads(run.threads);
  Json hashes = Json::object();
  for (const auto& p : run.inputs)
    if (fs::is_regular_file(p)) hashes[p.string()] = "fnv1a64:" + hex64(fnv1a(p));
  m["input_hashes"] = hashes;
  Json outs = Json::array();
  for (const auto& p : run.outputs) outs.push_back(p.string());
  m["outputs"] = outs;
  m["results"] = run.results;
  m["version"] = RELU_LAWN_VERSION;
  m["duration_seconds"] = seconds;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write manifest " + path.string());
  out << m.dump(1) << "\n";
}

std::ofstream open_csv(Run& run, const std::string& path) {
  std::ofstream out(run.output(path), std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  return out;
}

std::vector<double> parse_grid(const std::string& spec, const std::string& flag) {
  std::vector<double> out;
  auto number = [&](const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw CLI::ValidationError(flag, "bad number \"" + s + "\"");
    return v;
  };
  if (std::count(spec.begin(), spec.end(), ':') == 2) {
    const auto a = spec.find(':'), b = spec.rfind(':');
    const double lo = number(spec.substr(0, a)), hi = number(spec.substr(a + 1, b - a - 1));
    const double n = number(spec.substr(b + 1));
    if (!(n >= 2.0) || n != std::floor(n) || !(hi > lo))
      throw CLI::ValidationError(flag, "range must be lo:hi:n with hi > lo and integer n >= 2");
    for (int i = 0; i < static_cast<int>(n); ++i) out.push_back(lo + (hi - lo) * i / (n - 1.0));
  } else {
    std::stringstream ss(spec);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(number(cell));
  }
  if (out.empty()) throw CLI::ValidationError(flag, "empty grid");
  return out;
}

// --gmm FILE, or an isotropic Gaussian from --center and --variance.
struct LawOptions {
  std::string gmm;
  std::vector<double> center;
  double variance = 0.5;

  void add(CLI::App* sub) {
    auto* g = sub->add_option("--gmm", gmm, "input mixture JSON")->check(CLI::ExistingFile);
    auto* c = sub->add_option("--center", center, "isotropic input mean (comma separated)")->delimiter(',');
    sub->add_option("--variance", variance, "isotropic input variance")->check(CLI::PositiveNumber);
    g->excludes(c);
  }

  GaussianMixture load(Run& run) const {
    if (!gmm.empty()) return load_gmm(run.input(gmm));
    if (center.empty()) throw CLI::RequiredError("--gmm or --center");
    const auto d = static_cast<Eigen::Index>(center.size());
    Vector mu(d);
    for (Eigen::Index i = 0; i < d; ++i) mu[i] = center[static_cast<std::size_t>(i)];
    return GaussianMixture::single(mu, variance * Matrix::Identity(d, d));
  }
};

struct QuadOptions {
  std::size_t budget = 8192;
  std::size_t shifts = 8;
  std::uint64_t seed = 20240601;
  bool diagonal = false;
  std::size_t exhaustive_cap = 16;

  void add(CLI::App* sub) {
    sub->add_option("--budget", budget, "quadrature points per shift")->check(CLI::PositiveNumber);
    sub->add_option("--shifts", shifts, "randomized shifts")->check(CLI::Range(2, 1 << 20));
    sub->add_option("--quad-seed", seed, "quadrature seed");
    sub->add_flag("--diagonal", diagonal, "diagonal covariance approximation");
    sub->add_option("--exhaustive-cap", exhaustive_cap, "largest hidden-bit count for exhaustive runs");
  }

  EvalConfig config(std::size_t threads) const {
    EvalConfig cfg;
    cfg.quadrature.sample_budget = budget;
    cfg.quadrature.n_shifts = shifts;
    cfg.quadrature.seed = seed;
    cfg.diagonal_approximation = diagonal;
    cfg.exhaustive_cap = exhaustive_cap;
    cfg.threads = threads;
    return cfg;
  }
};

std::vector<ActivationPattern> support_or_all(Run& run, const NetworkParams& net, const std::string& support,
                                              std::size_t cap) {
  if (support.empty()) return all_patterns(net, cap);
  return read_patterns_csv(run.input(support), net.hidden_widths());
}

void write_pattern_rows(std::ostream& out, const PatternPMF& pmf) {
  out << "pattern_bits,pattern_decimal,probability,std_error\n";
  for (const auto& [p, e] : pmf.entries)
    out << p.to_string() << "," << p.decimal_label() << "," << format_double(e.probability) << ","
        << format_double(e.std_error) << "\n";
}

Dataset load_mnist(Run& run, const std::string& dir, const std::string& split) {
  const std::string prefix = split == "train" ? "train" : "t10k";
  const fs::path images = run.input((fs::path(dir) / (prefix + "-images-idx3-ubyte")).string());
  const fs::path labels = run.input((fs::path(dir) / (prefix + "-labels-idx1-ubyte")).string());
  return load_idx(images, labels);
}

Activation activation_from(double leaky) { return leaky > 0.0 ? Activation::leaky_relu(leaky) : Activation::relu(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Activation-pattern and output distributions of ReLU networks under Gaussian-mixture inputs"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", RELU_LAWN_VERSION);
  Run run;
  std::string manifest;
  app.add_option("--threads", run.threads, "worker threads (default: RELU_LAWN_THREADS or 1)");
  app.add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  std::string out;
  std::function<void()> action;

  // train-moons
  struct {
    std::size_t samples = 1250;
    double noise = 0.2, fraction = 0.8, lr = 1e-2, leaky = 0.0;
    std::vector<std::size_t> widths{4, 4, 4};
    std::size_t batch = 64, epochs = 20;
    std::uint64_t seed = 0;
    std::string train_csv, test_csv;
  } tm;
  auto* train_moons = app.add_subcommand("train-moons", "train the two-moons classifier");
  train_moons->add_option("--samples", tm.samples, "points generated before the split");
  train_moons->add_option("--noise", tm.noise, "noise standard deviation");
  train_moons->add_option("--train-fraction", tm.fraction, "share of points used for training");
  train_moons->add_option("--widths", tm.widths, "hidden widths")->delimiter(',');
  train_moons->add_option("--lr", tm.lr, "Adam learning rate");
  train_moons->add_option("--batch", tm.batch, "minibatch size");
  train_moons->add_option("--epochs", tm.epochs, "epochs");
  train_moons->add_option("--leaky", tm.leaky, "leaky slope (0 = ReLU)");
  train_moons->add_option("--seed", tm.seed, "data, split, init and shuffle seed");
  train_moons->add_option("--train-csv", tm.train_csv, "write the training split");
  train_moons->add_option("--test-csv", tm.test_csv, "write the held-out split");
  train_moons->add_option("--out", out, "network JSON")->required();
  train_moons->callback([&] {
    action = [&] {
      const auto [train, test] = split_dataset(make_moons(tm.samples, tm.noise, tm.seed), tm.fraction, tm.seed + 1);
      std::vector<std::size_t> widths{2};
      widths.insert(widths.end(), tm.widths.begin(), tm.widths.end());
      widths.push_back(1);
      TrainConfig cfg;
      cfg.learning_rate = tm.lr;
      cfg.batch_size = tm.batch;
      cfg.epochs = tm.epochs;
      cfg.seed = tm.seed;
      const auto result = train_mlp(glorot_init(widths, activation_from(tm.leaky), tm.seed + 100), train, cfg);
      save_network(run.output(out), result.net);
      if (!tm.train_csv.empty()) write_dataset_csv(run.output(tm.train_csv), train);
      if (!tm.test_csv.empty()) write_dataset_csv(run.output(tm.test_csv), test);
      run.results["test_accuracy"] = accuracy(result.net, test);
      run.results["epoch_loss"] = result.epoch_loss;
      std::cout << "held-out accuracy " << accuracy(result.net, test) << "\n";
    };
  });

  // train-mnist
  struct {
    std::string dir;
    std::vector<std::size_t> widths{16, 16, 16};
    double lr = 1e-3, leaky = 0.0;
    std::size_t batch = 128, epochs = 10;
    std::uint64_t seed = 0;
  } tn;
  auto* train_mnist = app.add_subcommand("train-mnist", "train the MNIST classifier");
  train_mnist->add_option("--mnist-dir", tn.dir, "directory with IDX files")->required()->check(CLI::ExistingDirectory);
  train_mnist->add_option("--widths", tn.widths, "hidden widths")->delimiter(',');
  train_mnist->add_option("--lr", tn.lr, "Adam learning rate");
  train_mnist->add_option("--batch", tn.batch, "minibatch size");
  train_mnist->add_option("--epochs", tn.epochs, "epochs");
  train_mnist->add_option("--leaky", tn.leaky, "leaky slope (0 = ReLU)");
  train_mnist->add_option("--seed", tn.seed, "init and shuffle seed");
  train_mnist->add_option("--out", out, "network JSON")->required();
  train_mnist->callback([&] {
    action = [&] {
      const Dataset train = load_mnist(run, tn.dir, "train");
      const Dataset test = load_mnist(run, tn.dir, "test");
      std::vector<std::size_t> widths{train.dim()};
      widths.insert(widths.end(), tn.widths.begin(), tn.widths.end());
      widths.push_back(train.n_classes);
      TrainConfig cfg;
      cfg.learning_rate = tn.lr;
      cfg.batch_size = tn.batch;
      cfg.epochs = tn.epochs;
      cfg.seed = tn.seed;
      cfg.loss = LossKind::softmax;
      const auto result = train_mlp(glorot_init(widths, activation_from(tn.leaky), tn.seed + 100), train, cfg);
      save_network(run.output(out), result.net);
      run.results["test_accuracy"] = accuracy(result.net, test);
      run.results["epoch_loss"] = result.epoch_loss;
      std::cout << "test accuracy " << accuracy(result.net, test) << "\n";
    };
  });

  // fit-gmm
  struct {
    std::string data;
    int label = -1;
    std::size_t components = 3, max_iters = 200;
    double tol = 1e-6;
    std::uint64_t seed = 0;
  } fg;
  auto* fit_gmm = app.add_subcommand("fit-gmm", "fit a diagonal Gaussian mixture by EM");
  fit_gmm->add_option("--data", fg.data, "dataset CSV (x0..,label)")->required()->check(CLI::ExistingFile);
  fit_gmm->add_option("--class", fg.label, "only rows with this label (-1 = all)");
  fit_gmm->add_option("--components", fg.components, "mixture components");
  fit_gmm->add_option("--max-iters", fg.max_iters, "EM iteration limit");
  fit_gmm->add_option("--tol", fg.tol, "stop when the mean log-likelihood gains less");
  fit_gmm->add_option("--seed", fg.seed, "seeding");
  fit_gmm->add_option("--out", out, "mixture JSON")->required();
  fit_gmm->callback([&] {
    action = [&] {
      const Dataset d = read_dataset_csv(run.input(fg.data));
      const Matrix rows = fg.label < 0 ? d.inputs : d.class_rows(fg.label);
      const EmResult r = fit_gmm_em(rows, fg.components, {fg.max_iters, fg.tol, fg.seed});
      save_gmm(run.output(out), r.gmm);
      run.results["log_likelihood"] = r.log_likelihood.back();
      run.results["iterations"] = r.iterations;
      run.results["converged"] = r.converged;
    };
  });

  // class-gaussian
  struct {
    std::string data, dir, split = "train";
    int label = 0;
  } cg;
  auto* class_gaussian = app.add_subcommand("class-gaussian", "mean and covariance of one class");
  auto* cg_data = class_gaussian->add_option("--data", cg.data, "dataset CSV")->check(CLI::ExistingFile);
  auto* cg_dir = class_gaussian->add_option("--mnist-dir", cg.dir, "directory with IDX files")->check(CLI::ExistingDirectory);
  cg_data->excludes(cg_dir);
  class_gaussian->add_option("--split", cg.split, "MNIST split")->check(CLI::IsMember({"train", "test"}));
  class_gaussian->add_option("--class", cg.label, "label")->required();
  class_gaussian->add_option("--out", out, "single-component mixture JSON")->required();
  class_gaussian->callback([&] {
    action = [&] {
      if (cg.data.empty() && cg.dir.empty()) throw CLI::RequiredError("--data or --mnist-dir");
      const Dataset d = cg.data.empty() ? load_mnist(run, cg.dir, cg.split) : read_dataset_csv(run.input(cg.data));
      const ClassGaussian g = fit_class_gaussian(d.class_rows(cg.label));
      save_gmm(run.output(out), GaussianMixture::single(g.mean, g.covariance));
      run.results["ridge"] = g.ridge;
    };
  });

  // pmf
  LawOptions pmf_law;
  QuadOptions pmf_quad;
  struct {
    std::string net, support;
    bool exhaustive = false;
  } pm;
  auto* pmf = app.add_subcommand("pmf", "activation-pattern probabilities");
  pmf->add_option("--net", pm.net, "network JSON")->required()->check(CLI::ExistingFile);
  pmf_law.add(pmf);
  pmf_quad.add(pmf);
  auto* pm_ex = pmf->add_flag("--exhaustive", pm.exhaustive, "all 2^bits patterns");
  auto* pm_sup = pmf->add_option("--support", pm.support, "pattern CSV")->check(CLI::ExistingFile);
  pm_ex->excludes(pm_sup);
  pmf->add_option("--out", out, "PMF CSV")->required();
  pmf->callback([&] {
    action = [&] {
      if (!pm.exhaustive && pm.support.empty()) throw CLI::RequiredError("--exhaustive or --support");
      const NetworkParams net = load_network(run.input(pm.net));
      const GaussianMixture gmm = pmf_law.load(run);
      const EvalConfig cfg = pmf_quad.config(run.threads);
      const PatternPMF r = pm.exhaustive
                               ? enumerate_pmf(net, gmm, PatternSelection::exhaustive(), cfg)
                               : enumerate_pmf(net, gmm, PatternSelection::explicit_list(support_or_all(run, net, pm.support, 0)), cfg);
      auto csv = open_csv(run, out);
      write_pattern_rows(csv, r);
      run.results["total"] = r.total();
      run.results["residual_mass"] = r.residual_mass;
      run.results["total_std_error"] = r.total_std_error();
    };
  });

  // output-cdf
  LawOptions cdf_law;
  QuadOptions cdf_quad;
  struct {
    std::string net, support, density;
    std::vector<std::string> grid;
  } oc;
  auto* output_cdf_cmd = app.add_subcommand("output-cdf", "CDF of the network output on a grid");
  output_cdf_cmd->add_option("--net", oc.net, "network JSON")->required()->check(CLI::ExistingFile);
  cdf_law.add(output_cdf_cmd);
  cdf_quad.add(output_cdf_cmd);
  output_cdf_cmd->add_option("--support", oc.support, "pattern CSV (default: exhaustive)")->check(CLI::ExistingFile);
  output_cdf_cmd->add_option("--grid", oc.grid, "lo:hi:n or a comma list, once per output dimension")->required();
  output_cdf_cmd->add_option("--density-out", oc.density, "finite-difference density CSV (scalar output)");
  output_cdf_cmd->add_option("--out", out, "CDF CSV")->required();
  output_cdf_cmd->callback([&] {
    action = [&] {
      const NetworkParams net = load_network(run.input(oc.net));
      const GaussianMixture gmm = cdf_law.load(run);
      if (oc.grid.size() != net.output_dim())
        throw CLI::ValidationError("--grid", "need one grid per output dimension (" + std::to_string(net.output_dim()) + ")");
      std::vector<std::vector<double>> axes;
      std::size_t total = 1;
      for (const auto& g : oc.grid) {
        axes.push_back(parse_grid(g, "--grid"));
        total *= axes.back().size();
      }
      const auto support = support_or_all(run, net, oc.support, cdf_quad.exhaustive_cap);
      const InputLaw law(net, gmm);
      const EvalConfig cfg = cdf_quad.config(run.threads);
      auto csv = open_csv(run, out);
      for (std::size_t j = 0; j < axes.size(); ++j) csv << "phi" << j << ",";
      csv << "cdf_value,std_error\n";
      std::vector<double> first_axis;
      std::vector<ProbResult> values;
      for (std::size_t idx = 0; idx < total; ++idx) {
        Vector at(static_cast<Eigen::Index>(axes.size()));
        std::size_t rest = idx;
        for (std::size_t j = axes.size(); j-- > 0;) {
          at[static_cast<Eigen::Index>(j)] = axes[j][rest % axes[j].size()];
          rest /= axes[j].size();
        }
        const ProbResult r = output_cdf(law, support, at, cfg);
        for (Eigen::Index j = 0; j < at.size(); ++j) csv << format_double(at[j]) << ",";
        csv << format_double(r.value) << "," << format_double(r.std_error) << "\n";
        first_axis.push_back(at[0]);
        values.push_back(r);
      }
      if (!oc.density.empty()) {
        if (axes.size() != 1) throw CLI::ValidationError("--density-out", "only for scalar outputs");
        const auto dens = output_density_fd(first_axis, values);
        auto dcsv = open_csv(run, oc.density);
        dcsv << "phi0,density\n";
        for (std::size_t i = 0; i < dens.size(); ++i) dcsv << format_double(first_axis[i]) << "," << format_double(dens[i]) << "\n";
      }
      run.results["support_size"] = support.size();
    };
  });

  // support
  LawOptions sup_law;
  struct {
    std::string net;
    std::optional<double> tau, entropy;
    std::size_t cap = 10, global_cap = std::size_t{1} << 16;
  } su;
  auto* support = app.add_subcommand("support", "estimate the high-probability pattern support");
  support->add_option("--net", su.net, "network JSON")->required()->check(CLI::ExistingFile);
  sup_law.add(support);
  auto* su_tau = support->add_option("--tau", su.tau, "margin threshold |p - 0.5| per layer");
  auto* su_ent = support->add_option("--entropy", su.entropy, "entropy threshold in bits per layer");
  su_tau->excludes(su_ent);
  support->add_option("--cap", su.cap, "most free neurons per layer");
  support->add_option("--global-cap", su.global_cap, "most partial patterns per layer");
  support->add_option("--out", out, "pattern CSV")->required();
  support->callback([&] {
    action = [&] {
      if (!su.tau && !su.entropy) throw CLI::RequiredError("--tau or --entropy");
      const NetworkParams net = load_network(run.input(su.net));
      const GaussianMixture gmm = sup_law.load(run);
      const std::size_t hidden = net.depth() - 1;
      const ThresholdSpec spec = su.tau ? ThresholdSpec::uniform_margin(*su.tau, hidden, su.cap)
                                        : ThresholdSpec::uniform_entropy(*su.entropy, hidden, su.cap);
      const SupportEstimate est = estimate_support(net, gmm, spec, {su.global_cap, 0.0});
      auto csv = open_csv(run, out);
      csv << "pattern_bits,pattern_decimal\n";
      for (const auto& p : est.patterns) csv << p.to_string() << "," << p.decimal_label() << "\n";
      run.results["patterns"] = est.patterns.size();
      run.results["max_free_per_layer"] = est.max_free_per_layer;
      run.results["prefixes_per_layer"] = est.prefixes_per_layer;
      run.results["entropy_thresholds"] = est.entropy_thresholds;
      run.results["margin_thresholds"] = est.margin_thresholds;
    };
  });

  // coverage
  struct {
    std::string net, support, dir, train, test;
    std::vector<double> margins{0.1, 0.2, 0.3, 0.4};
    std::size_t cap = 10, global_cap = std::size_t{1} << 16;
    int label = -1;
  } cv;
  auto* coverage = app.add_subcommand("coverage", "share of test inputs whose pattern lies in an estimated support");
  coverage->add_option("--net", cv.net, "network JSON")->required()->check(CLI::ExistingFile);
  coverage->add_option("--support", cv.support, "single pattern CSV to score")->check(CLI::ExistingFile);
  coverage->add_option("--mnist-dir", cv.dir, "IDX directory (train split fits, test split scores)")->check(CLI::ExistingDirectory);
  coverage->add_option("--train-data", cv.train, "CSV used to fit class Gaussians")->check(CLI::ExistingFile);
  coverage->add_option("--test-data", cv.test, "CSV of scored inputs")->check(CLI::ExistingFile);
  coverage->add_option("--margins", cv.margins, "margins")->delimiter(',');
  coverage->add_option("--cap", cv.cap, "most free neurons per layer");
  coverage->add_option("--global-cap", cv.global_cap, "most partial patterns per layer");
  coverage->add_option("--class", cv.label, "restrict to one label (-1 = all)");
  coverage->add_option("--out", out, "coverage CSV")->required();
  coverage->callback([&] {
    action = [&] {
      const NetworkParams net = load_network(run.input(cv.net));
      const bool mnist = !cv.dir.empty();
      if (!mnist && cv.test.empty()) throw CLI::RequiredError("--mnist-dir or --test-data");
      const Dataset test = mnist ? load_mnist(run, cv.dir, "test") : read_dataset_csv(run.input(cv.test));
      auto csv = open_csv(run, out);
      if (!cv.support.empty()) {
        const auto patterns = read_patterns_csv(run.input(cv.support), net.hidden_widths());
        const Matrix rows = cv.label < 0 ? test.inputs : test.class_rows(cv.label);
        const double c = coverage_proportion(patterns, net, rows);
        csv << "class,patterns,inputs,coverage\n" << cv.label << "," << patterns.size() << "," << rows.rows() << ","
            << format_double(c) << "\n";
        run.results["coverage"] = c;
        return;
      }
      if (!mnist && cv.train.empty()) throw CLI::RequiredError("--train-data");
      const Dataset train = mnist ? load_mnist(run, cv.dir, "train") : read_dataset_csv(run.input(cv.train));
      csv << "class,margin,entropy_bits,patterns,coverage\n";
      std::vector<double> mean(cv.margins.size(), 0.0);
      std::size_t classes = 0;
      for (int c = 0; c < static_cast<int>(train.n_classes); ++c) {
        if (cv.label >= 0 && c != cv.label) continue;
        const ClassGaussian g = fit_class_gaussian(train.class_rows(c));
        const GaussianMixture gmm = GaussianMixture::single(g.mean, g.covariance);
        const Matrix rows = test.class_rows(c);
        for (std::size_t m = 0; m < cv.margins.size(); ++m) {
          const auto spec = ThresholdSpec::uniform_margin(cv.margins[m], net.depth() - 1, cv.cap);
          const SupportEstimate est = estimate_support(net, gmm, spec, {cv.global_cap, 0.0});
          const double share = coverage_proportion(est, net, rows);
          mean[m] += share;
          csv << c << "," << format_double(cv.margins[m]) << "," << format_double(entropy_from_margin(cv.margins[m]))
              << "," << est.patterns.size() << "," << format_double(share) << "\n";
        }
        ++classes;
      }
      for (double& v : mean) v /= static_cast<double>(std::max<std::size_t>(classes, 1));
      run.results["mean_coverage"] = mean;
    };
  });

  // sv-dist
  LawOptions sv_law;
  QuadOptions sv_quad;
  struct {
    std::string net;
    double tau = 0.25, upper = 0.0;
    std::size_t cap = 10, mc_samples = 0;
    std::uint64_t seed = 0;
  } sv;
  auto* sv_dist = app.add_subcommand("sv-dist", "distribution of Jacobian singular values");
  sv_dist->add_option("--net", sv.net, "network JSON")->required()->check(CLI::ExistingFile);
  sv_law.add(sv_dist);
  sv_quad.add(sv_dist);
  sv_dist->add_option("--tau", sv.tau, "support margin");
  sv_dist->add_option("--cap", sv.cap, "most free neurons per layer");
  sv_dist->add_option("--upper", sv.upper, "histogram upper edge (0 = 1.05 max)");
  sv_dist->add_option("--mc-samples", sv.mc_samples, "Monte Carlo comparison samples (0 = none)");
  sv_dist->add_option("--seed", sv.seed, "Monte Carlo seed");
  sv_dist->add_option("--out", out, "histogram CSV")->required();
  sv_dist->callback([&] {
    action = [&] {
      const NetworkParams net = load_network(run.input(sv.net));
      const GaussianMixture gmm = sv_law.load(run);
      const auto est = estimate_support(net, gmm, ThresholdSpec::uniform_margin(sv.tau, net.depth() - 1, sv.cap));
      const PatternPMF pmf = enumerate_pmf(net, gmm, PatternSelection::explicit_list(est.patterns), sv_quad.config(run.threads));
      std::vector<ActivationPattern> patterns;
      std::vector<double> weights;
      for (const auto& [p, e] : pmf.entries) {
        patterns.push_back(p);
        weights.push_back(e.probability);
      }
      const WeightedValues exact = weighted_singular_values(net, patterns, weights, run.threads);
      std::optional<WeightedValues> mc;
      double upper = sv.upper;
      if (sv.mc_samples > 0) {
        const auto reduced = first_layer_reduction(net, gmm);
        const EmpiricalLaw emp = mc_empirical(reduced.net, mc_sample(reduced.gmm, sv.mc_samples, sv.seed, run.threads), sv.seed,
                                              run.threads);
        std::vector<ActivationPattern> mp;
        std::vector<double> mw;
        for (const auto& [p, c] : emp.pattern_counts) {
          mp.push_back(p);
          mw.push_back(static_cast<double>(c) / static_cast<double>(emp.n));
        }
        mc = weighted_singular_values(net, mp, mw, run.threads);
        run.results["ks"] = ks_two_sample(exact, *mc);
      }
      if (!(upper > 0.0)) {
        double top = 0.0;
        for (double x : exact.values) top = std::max(top, x);
        if (mc)
          for (double x : mc->values) top = std::max(top, x);
        upper = top > 0.0 ? 1.05 * top : 1.0;
      }
      const SVHistogram h = sv_histogram(exact, upper, kSvBins, SVHistogram::Source::exact_support);
      std::optional<SVHistogram> hm;
      if (mc) hm = sv_histogram(*mc, upper, kSvBins, SVHistogram::Source::monte_carlo);
      auto csv = open_csv(run, out);
      csv << "bin_lower,bin_upper,exact_mass" << (hm ? ",mc_mass" : "") << "\n";
      for (std::size_t b = 0; b < h.mass.size(); ++b) {
        csv << format_double(h.edges[b]) << "," << format_double(h.edges[b + 1]) << "," << format_double(h.mass[b]);
        if (hm) csv << "," << format_double(hm->mass[b]);
        csv << "\n";
      }
      run.results["support_size"] = patterns.size();
      run.results["residual_mass"] = h.residual;
    };
  });

  // mc-validate
  LawOptions mv_law;
  QuadOptions mv_quad;
  struct {
    std::string net, support, grid;
    std::size_t samples = 1000000;
    std::uint64_t seed = 7;
  } mv;
  auto* mc_validate = app.add_subcommand("mc-validate", "compare exact probabilities with Monte Carlo");
  mc_validate->add_option("--net", mv.net, "network JSON")->required()->check(CLI::ExistingFile);
  mv_law.add(mc_validate);
  mv_quad.add(mc_validate);
  mc_validate->add_option("--support", mv.support, "pattern CSV (default: exhaustive)")->check(CLI::ExistingFile);
  mc_validate->add_option("--samples", mv.samples, "Monte Carlo samples")->check(CLI::PositiveNumber);
  mc_validate->add_option("--seed", mv.seed, "Monte Carlo seed");
  mc_validate->add_option("--grid", mv.grid, "output CDF grid for a KS check (scalar output)");
  mc_validate->add_option("--out", out, "per-pattern comparison CSV")->required();
  mc_validate->callback([&] {
    action = [&] {
      const NetworkParams net = load_network(run.input(mv.net));
      const GaussianMixture gmm = mv_law.load(run);
      const EvalConfig cfg = mv_quad.config(run.threads);
      const auto patterns = support_or_all(run, net, mv.support, mv_quad.exhaustive_cap);
      const InputLaw law(net, gmm);
      PatternPMF exact = enumerate_pmf(law, PatternSelection::explicit_list(patterns), cfg);
      if (mv.support.empty()) exact.mode = PmfMode::exhaustive;
      const EmpiricalLaw emp = mc_empirical(net, mc_sample(gmm, mv.samples, mv.seed, run.threads), mv.seed, run.threads);
      const PatternPMF mc = emp.pmf();
      auto csv = open_csv(run, out);
      csv << "pattern_bits,pattern_decimal,probability,std_error,mc_probability\n";
      for (const auto& [p, e] : exact.entries)
        csv << p.to_string() << "," << p.decimal_label() << "," << format_double(e.probability) << ","
            << format_double(e.std_error) << "," << format_double(mc.probability(p)) << "\n";
      const double tv = tv_distance(exact, mc), dmax = max_abs_difference(exact, mc);
      run.results["tv"] = tv;
      run.results["max_abs_difference"] = dmax;
      std::cout << "tv " << format_double(tv) << "\nmax_abs_difference " << format_double(dmax) << "\n";
      if (!mv.grid.empty()) {
        if (net.output_dim() != 1) throw CLI::ValidationError("--grid", "KS check needs a scalar output");
        const auto grid = parse_grid(mv.grid, "--grid");
        std::vector<double> cdf;
        for (double t : grid) cdf.push_back(output_cdf(law, patterns, Vector::Constant(1, t), cfg).value);
        std::vector<double> ys(emp.output_samples.data(), emp.output_samples.data() + emp.output_samples.size());
        const double ks = ks_statistic(grid, cdf, ys);
        run.results["ks"] = ks;
        std::cout << "ks " << format_double(ks) << "\n";
      }
    };
  });

  // tail-rates
  QuadOptions tr_quad;
  struct {
    std::string net, gmm0, gmm1, support0, support1;
    double threshold = 0.0;
    std::size_t mc_samples = 0;
    std::uint64_t seed = 0;
  } tr;
  auto* tail = app.add_subcommand("tail-rates", "class-conditional error rates of a binary classifier");
  tail->add_option("--net", tr.net, "network JSON")->required()->check(CLI::ExistingFile);
  tail->add_option("--gmm0", tr.gmm0, "class-0 mixture JSON")->required()->check(CLI::ExistingFile);
  tail->add_option("--gmm1", tr.gmm1, "class-1 mixture JSON")->required()->check(CLI::ExistingFile);
  tail->add_option("--support0", tr.support0, "class-0 pattern CSV (default: exhaustive)")->check(CLI::ExistingFile);
  tail->add_option("--support1", tr.support1, "class-1 pattern CSV (default: exhaustive)")->check(CLI::ExistingFile);
  tail->add_option("--threshold", tr.threshold, "decision threshold on the output");
  tr_quad.add(tail);
  tail->add_option("--mc-samples", tr.mc_samples, "Monte Carlo comparison samples (0 = none)");
  tail->add_option("--seed", tr.seed, "Monte Carlo seed");
  tail->add_option("--out", out, "rates CSV")->required();
  tail->callback([&] {
    action = [&] {
      const NetworkParams net = load_network(run.input(tr.net));
      const std::vector<GaussianMixture> gmms{load_gmm(run.input(tr.gmm0)), load_gmm(run.input(tr.gmm1))};
      const std::vector<std::vector<ActivationPattern>> supports{
          support_or_all(run, net, tr.support0, tr_quad.exhaustive_cap),
          support_or_all(run, net, tr.support1, tr_quad.exhaustive_cap)};
      const auto rates = tail_rates(net, gmms, supports, tr.threshold, tr_quad.config(run.threads));
      auto csv = open_csv(run, out);
      csv << "class,rate,std_error" << (tr.mc_samples > 0 ? ",mc_rate" : "") << "\n";
      for (const auto& r : rates) {
        csv << r.label << "," << format_double(r.rate.value) << "," << format_double(r.rate.std_error);
        if (tr.mc_samples > 0) {
          const auto reduced = first_layer_reduction(net, gmms[r.label]);
          const auto emp = mc_empirical(reduced.net, mc_sample(reduced.gmm, tr.mc_samples, mix_seed(tr.seed, r.label), run.threads),
                                        tr.seed, run.threads);
          std::size_t wrong = 0;
          for (Eigen::Index i = 0; i < emp.output_samples.rows(); ++i) {
            const double y = emp.output_samples(i, 0);
            wrong += r.label == 0 ? (y > tr.threshold) : (y < tr.threshold);
          }
          csv << "," << format_double(static_cast<double>(wrong) / static_cast<double>(emp.n));
        }
        csv << "\n";
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  run.app = sub;
  const auto start = std::chrono::steady_clock::now();
  try {
    action();
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(run, manifest.empty() ? fs::path(out + ".manifest.json") : fs::path(manifest), seconds);
  } catch (const CLI::Error& e) {
    std::cerr << sub->get_name() << ": " << e.what() << "\n" << sub->help();
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << sub->get_name() << ": " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << sub->get_name() << ": " << e.what() << "\n";
    return kExitData;
  } catch (const IndexError& e) {
    std::cerr << sub->get_name() << ": " << e.what() << "\n";
    return kExitData;
  } catch (const CapacityError& e) {
    std::cerr << sub->get_name() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DomainError& e) {
    std::cerr << sub->get_name() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const TrainingError& e) {
    std::cerr << sub->get_name() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << sub->get_name() << ": " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}
