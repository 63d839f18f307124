// cgat: generate data, train baseline and CgAT models, attack, evaluate,
// run the built-in verifications and assemble comparison reports.
//
// Knob precedence: built-in defaults < --config file < command-line flags.
// Exit codes: 0 success, 2 config error, 3 data/format error, 4 verification
// failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cgat/dataset.hpp"
#include "cgat/hashmodel.hpp"
#include "cgat/io.hpp"
#include "cgat/pipeline.hpp"
#include "cgat/retrieval.hpp"
#include "cgat/trainer.hpp"
#include "cgat/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kVerification = 4 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Knob {
  const char* name;
  json value;
  const char* help;
};

// Every tunable, with its default. Flags and config-file keys share these names.
std::vector<Knob> knob_table() {
  return {
      {"classes", 8, "number of classes C"},
      {"dim", 32, "feature dimension d"},
      {"train-count", 2000, "training samples (subset of the database)"},
      {"database-count", 4000, "database samples"},
      {"query-count", 200, "query samples"},
      {"noise", 0.05, "Gaussian noise scale"},
      {"multi-label-prob", 0.3, "probability of a second class"},
      {"contrast", cgat::GenSpec{}.contrast, "feature contrast around 0.5, in (0,1]"},
      {"data-seed", 7, "generator seed"},
      {"bits", 16, "code length K"},
      {"hidden", 64, "hidden layer width"},
      {"model-seed", 1, "parameter initialization seed"},
      {"epochs", 30, "training epochs E"},
      {"pretrain-epochs", 30, "warm-start epochs when train-cgat has no --init"},
      {"batch-size", 32, "batch size n"},
      {"lr", 0.01, "learning rate"},
      {"momentum", 0.9, "SGD momentum"},
      {"weight-decay", 5e-4, "weight decay"},
      {"lambda", 1.0, "adversarial loss weight"},
      {"quantization-weight", cgat::kDefaultQuantizationWeight, "quantization penalty weight"},
      {"train-seed", 1, "batch shuffling seed"},
      {"checkpoint-every", 0, "write a checkpoint every N epochs (0 = off)"},
      {"epsilon", 8.0 / 255.0, "training PGD budget"},
      {"alpha", 2.0 / 255.0, "training PGD step"},
      {"iterations", 7, "training PGD steps"},
      {"attack-epsilon", 8.0 / 255.0, "evaluation attack budget"},
      {"attack-alpha", 1.0 / 255.0, "evaluation attack step"},
      {"attack-iterations", 100, "evaluation attack steps"},
      {"top-n", 500, "MAP cutoff"},
      {"ap-norm", "relevant-in-top-n", "AP denominator: relevant-in-top-n | min-total-and-top-n"},
      {"workers", 1, "worker threads for PGD and evaluation"},
      {"instances", 200, "chcm-check instance count"},
      {"grad-models", 5, "grad-check model count"},
      {"check-seed", 2024, "seed for chcm-check and grad-check"},
  };
}

/// Accepts plain numbers and fractions such as "8/255".
double parse_real(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
      const double num = std::stod(text.substr(0, slash), &used);
      if (used != slash) throw std::invalid_argument(text);
      const std::string den_text = text.substr(slash + 1);
      const double den = std::stod(den_text, &used);
      if (used != den_text.size() || den == 0.0) throw std::invalid_argument(text);
      return num / den;
    }
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  }
}

json coerce(const json& like, const json& given, const std::string& key) {
  if (like.is_string()) {
    if (!given.is_string()) throw ConfigError("'" + key + "' expects a string");
    return given;
  }
  if (like.is_number_float()) {
    if (given.is_number()) return given.get<double>();
    if (given.is_string()) return parse_real(given.get<std::string>(), key);
    throw ConfigError("'" + key + "' expects a number");
  }
  // Integer knobs.
  double v = 0.0;
  if (given.is_number()) {
    v = given.get<double>();
  } else if (given.is_string()) {
    v = parse_real(given.get<std::string>(), key);
  } else {
    throw ConfigError("'" + key + "' expects an integer");
  }
  if (v != static_cast<double>(static_cast<long long>(v))) throw ConfigError("'" + key + "' expects an integer");
  if (v < 0) throw ConfigError("'" + key + "' must be non-negative");
  return static_cast<long long>(v);
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : knob_table()) values_[k.name] = k.value;
  }

  void merge_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, val] : doc.items()) set(key, val);
  }

  void set(const std::string& key, const json& val) {
    if (!values_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = coerce(values_[key], val, key);
  }

  double real(const char* key) const { return values_.at(key).get<double>(); }
  long long integer(const char* key) const { return values_.at(key).get<long long>(); }
  std::size_t size(const char* key) const { return static_cast<std::size_t>(integer(key)); }
  std::string text(const char* key) const { return values_.at(key).get<std::string>(); }
  const json& all() const { return values_; }

  cgat::GenSpec gen_spec() const {
    cgat::GenSpec s;
    s.classes = size("classes");
    s.dim = size("dim");
    s.train_count = size("train-count");
    s.database_count = size("database-count");
    s.query_count = size("query-count");
    s.noise = real("noise");
    s.multi_label_prob = real("multi-label-prob");
    s.contrast = real("contrast");
    s.seed = static_cast<std::uint64_t>(integer("data-seed"));
    s.validate();
    return s;
  }

  cgat::TrainConfig train_config(int epochs) const {
    cgat::TrainConfig c;
    c.epochs = epochs;
    c.batch_size = size("batch-size");
    c.learning_rate = real("lr");
    c.momentum = real("momentum");
    c.weight_decay = real("weight-decay");
    c.lambda = real("lambda");
    c.quantization_weight = real("quantization-weight");
    c.adv.epsilon = real("epsilon");
    c.adv.alpha = real("alpha");
    c.adv.iterations = static_cast<int>(integer("iterations"));
    c.seed = static_cast<std::uint64_t>(integer("train-seed"));
    c.workers = static_cast<unsigned>(std::max<long long>(1, integer("workers")));
    c.checkpoint_every = static_cast<int>(integer("checkpoint-every"));
    c.validate();
    return c;
  }

  cgat::AdvConfig attack_config() const {
    cgat::AdvConfig a;
    a.epsilon = real("attack-epsilon");
    a.alpha = real("attack-alpha");
    a.iterations = static_cast<int>(integer("attack-iterations"));
    a.validate();
    return a;
  }

  cgat::EvalConfig eval_config() const {
    cgat::EvalConfig e;
    e.top_n = size("top-n");
    if (e.top_n == 0) throw ConfigError("'top-n' must be at least 1");
    const auto norm = text("ap-norm");
    if (norm == "relevant-in-top-n") {
      e.norm = cgat::ApNormalization::relevant_in_top_n;
    } else if (norm == "min-total-and-top-n") {
      e.norm = cgat::ApNormalization::min_total_and_top_n;
    } else {
      throw ConfigError("'ap-norm' must be relevant-in-top-n or min-total-and-top-n");
    }
    e.workers = static_cast<unsigned>(std::max<long long>(1, integer("workers")));
    return e;
  }

  std::vector<std::size_t> layer_dims(std::size_t input_dim) const {
    if (size("bits") == 0 || size("hidden") == 0) throw ConfigError("'bits' and 'hidden' must be positive");
    return {input_dim, size("hidden"), size("bits")};
  }

 private:
  json values_ = json::object();
};

struct Paths {
  std::string config, data, model, init, queries, out;
  std::string baseline_clean, baseline_attacked, cgat_clean, cgat_attacked;
};

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  auto q = p;
  q += suffix;
  return q;
}

void write_json(const fs::path& path, const json& doc) { cgat::io::write_text_atomic(path, doc.dump(2) + "\n"); }

void echo_config(const fs::path& out, const std::string& command, const RunConfig& cfg, const Paths& paths) {
  json doc;
  doc["command"] = command;
  doc["knobs"] = cfg.all();
  json p = json::object();
  auto add = [&](const char* key, const std::string& v) {
    if (!v.empty()) p[key] = v;
  };
  add("config", paths.config);
  add("data", paths.data);
  add("model", paths.model);
  add("init", paths.init);
  add("queries", paths.queries);
  add("out", paths.out);
  doc["paths"] = p;
  write_json(with_suffix(out, ".config.json"), doc);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required flag --") + flag);
}

cgat::Dataset load_data(const Paths& paths) {
  require(paths.data, "data");
  return cgat::load_dataset(paths.data);
}

double clean_map(const cgat::HashModel& model, const cgat::Dataset& ds, const RunConfig& cfg) {
  const auto db = ds.gather(cgat::kDatabase);
  const auto q = ds.gather(cgat::kQuery);
  return cgat::evaluate_model(model, db, q.features, q.labels, cfg.eval_config()).map_at_n;
}

void write_training_outputs(const fs::path& out, const std::string& command, const cgat::TrainResult& result,
                            const cgat::Dataset& ds, const RunConfig& cfg, const Paths& paths) {
  cgat::save_checkpoint(result.model, out);
  cgat::io::write_text_atomic(with_suffix(out, ".log.csv"), cgat::log_to_csv(result.log));
  json summary;
  summary["command"] = command;
  summary["clean_map"] = clean_map(result.model, ds, cfg);
  summary["top_n"] = cfg.size("top-n");
  summary["query_count"] = ds.count(cgat::kQuery);
  summary["batches"] = result.log.size();
  const auto means = result.epoch_mean_loss();
  summary["epoch_mean_l_cat"] = means;
  write_json(with_suffix(out, ".summary.json"), summary);
  echo_config(out, command, cfg, paths);
  std::printf("%s: wrote %s (clean MAP@%zu = %s)\n", command.c_str(), out.string().c_str(), cfg.size("top-n"),
              cgat::io::format_double(summary["clean_map"].get<double>()).c_str());
}

cgat::TrainConfig with_checkpoints(cgat::TrainConfig tc, const fs::path& out) {
  tc.checkpoint_path = out;
  return tc;
}

int cmd_gen_data(const RunConfig& cfg, const Paths& paths) {
  require(paths.out, "out");
  const auto ds = cgat::generate(cfg.gen_spec());
  cgat::save_dataset(ds, paths.out);
  echo_config(paths.out, "gen-data", cfg, paths);
  std::printf("gen-data: wrote %s (%zu samples, %zu train, %zu database, %zu query)\n", paths.out.c_str(), ds.size(),
              ds.count(cgat::kTrain), ds.count(cgat::kDatabase), ds.count(cgat::kQuery));
  return kOk;
}

int cmd_train_baseline(const RunConfig& cfg, const Paths& paths) {
  require(paths.out, "out");
  const auto ds = load_data(paths);
  const auto train = ds.gather(cgat::kTrain);
  const auto tc = with_checkpoints(cfg.train_config(static_cast<int>(cfg.integer("epochs"))), paths.out);
  auto model = cgat::HashModel::create(cfg.layer_dims(ds.dim), static_cast<std::uint64_t>(cfg.integer("model-seed")));
  const auto result = cgat::pretrain_baseline(std::move(model), train, tc);
  write_training_outputs(paths.out, "train-baseline", result, ds, cfg, paths);
  return kOk;
}

int cmd_train_cgat(const RunConfig& cfg, const Paths& paths) {
  require(paths.out, "out");
  const auto ds = load_data(paths);
  const auto train = ds.gather(cgat::kTrain);
  cgat::HashModel start;
  if (!paths.init.empty()) {
    start = cgat::load_checkpoint(paths.init);
    if (start.input_dim() != ds.dim) throw cgat::io::FormatError("--init checkpoint does not match the data width");
  } else {
    auto fresh = cgat::HashModel::create(cfg.layer_dims(ds.dim), static_cast<std::uint64_t>(cfg.integer("model-seed")));
    auto warm = cfg.train_config(static_cast<int>(cfg.integer("pretrain-epochs")));
    start = cgat::pretrain_baseline(std::move(fresh), train, warm).model;
  }
  const auto tc = with_checkpoints(cfg.train_config(static_cast<int>(cfg.integer("epochs"))), paths.out);
  const auto result = cgat::train_cgat(std::move(start), train, tc);
  write_training_outputs(paths.out, "train-cgat", result, ds, cfg, paths);
  return kOk;
}

int cmd_attack(const RunConfig& cfg, const Paths& paths) {
  require(paths.out, "out");
  require(paths.model, "model");
  const auto ds = load_data(paths);
  const auto model = cgat::load_checkpoint(paths.model);
  if (model.input_dim() != ds.dim) throw cgat::io::FormatError("checkpoint does not match the data width");
  const auto train = ds.gather(cgat::kTrain);
  const auto queries = ds.gather(cgat::kQuery);
  const auto adv_cfg = cfg.attack_config();
  const auto workers = static_cast<unsigned>(std::max<long long>(1, cfg.integer("workers")));

  const auto centers = cgat::centers_for_labels(model, train, queries.labels);
  std::vector<cgat::BinaryCode> codes;
  for (const auto& c : centers) codes.push_back(c.code);
  const auto adv = cgat::pgd_batch(model, queries.features, codes, adv_cfg, workers);

  cgat::Dataset out;
  out.dim = ds.dim;
  out.classes = ds.classes;
  out.features = adv;
  out.labels = queries.labels;
  out.splits.assign(queries.size(), cgat::kQuery);
  cgat::save_dataset(out, paths.out);

  double linf = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i) linf = std::max(linf, std::abs(adv[i] - queries.features[i]));
  json stats;
  stats["queries"] = queries.size();
  stats["epsilon"] = adv_cfg.epsilon;
  stats["alpha"] = adv_cfg.alpha;
  stats["iterations"] = adv_cfg.iterations;
  stats["max_linf"] = linf;
  stats["mean_l_ca_clean"] = cgat::mean_attack_loss(model, queries.features, codes);
  stats["mean_l_ca_adversarial"] = cgat::mean_attack_loss(model, adv, codes);
  write_json(with_suffix(paths.out, ".stats.json"), stats);
  echo_config(paths.out, "attack", cfg, paths);
  std::printf("attack: wrote %s (%zu queries, max |x'-x| = %s, mean L_ca %s -> %s)\n", paths.out.c_str(),
              queries.size(), cgat::io::format_double(linf).c_str(),
              cgat::io::format_double(stats["mean_l_ca_clean"].get<double>()).c_str(),
              cgat::io::format_double(stats["mean_l_ca_adversarial"].get<double>()).c_str());
  return kOk;
}

int cmd_evaluate(const RunConfig& cfg, const Paths& paths) {
  require(paths.out, "out");
  require(paths.model, "model");
  const auto ds = load_data(paths);
  const auto model = cgat::load_checkpoint(paths.model);
  if (model.input_dim() != ds.dim) throw cgat::io::FormatError("checkpoint does not match the data width");
  const auto db = ds.gather(cgat::kDatabase);
  cgat::Subset queries;
  if (paths.queries.empty()) {
    queries = ds.gather(cgat::kQuery);
  } else {
    const auto qd = cgat::load_dataset(paths.queries);
    if (qd.dim != ds.dim || qd.classes != ds.classes) {
      throw cgat::io::FormatError("query file does not match the dataset's width or class count");
    }
    queries = qd.gather(cgat::kQuery);
  }
  const auto report = cgat::evaluate_model(model, db, queries.features, queries.labels, cfg.eval_config());
  const fs::path out = paths.out;
  cgat::io::write_text_atomic(with_suffix(out, ".metrics.csv"), cgat::to_csv(report));
  cgat::io::write_text_atomic(with_suffix(out, ".summary.txt"), cgat::summary_text(report) + "\n");
  json summary;
  summary["map"] = report.map_at_n;
  summary["top_n"] = report.top_n;
  summary["query_count"] = report.query_count;
  write_json(with_suffix(out, ".summary.json"), summary);
  echo_config(out, "evaluate", cfg, paths);
  std::printf("evaluate: %s\n", cgat::summary_text(report).c_str());
  return kOk;
}

int cmd_chcm_check(const RunConfig& cfg, const Paths& paths) {
  const auto rep = cgat::chcm_check(cfg.size("instances"), static_cast<std::uint64_t>(cfg.integer("check-seed")));
  std::printf("chcm-check: %zu/%zu exact\n", rep.exact, rep.instances);
  if (!paths.out.empty()) {
    json doc{{"instances", rep.instances}, {"exact", rep.exact}, {"passed", rep.passed()}};
    write_json(paths.out, doc);
    echo_config(paths.out, "chcm-check", cfg, paths);
  }
  if (!rep.passed()) throw VerificationFailure("chcm-check: " + rep.first_failure);
  return kOk;
}

int cmd_grad_check(const RunConfig& cfg, const Paths& paths) {
  const auto rep = cgat::grad_check(cfg.size("grad-models"), static_cast<std::uint64_t>(cfg.integer("check-seed")));
  std::printf("grad-check: %zu models, %zu partials, %zu failures, max relative error %.3e\n", rep.models,
              rep.partials, rep.failures, rep.max_relative_error);
  if (!paths.out.empty()) {
    json doc{{"models", rep.models},
             {"partials", rep.partials},
             {"failures", rep.failures},
             {"max_relative_error", rep.max_relative_error},
             {"passed", rep.passed()}};
    write_json(paths.out, doc);
    echo_config(paths.out, "grad-check", cfg, paths);
  }
  if (!rep.passed()) throw VerificationFailure("grad-check: analytic and numeric gradients disagree");
  return kOk;
}

cgat::MetricsReport read_metrics(const std::string& path, const char* flag) {
  require(path, flag);
  const auto bytes = cgat::io::read_file(path);
  try {
    return cgat::metrics_from_csv(std::string(bytes.begin(), bytes.end()));
  } catch (const std::runtime_error& e) {
    throw cgat::io::FormatError(path + ": " + e.what());
  }
}

int cmd_report(const RunConfig& cfg, const Paths& paths) {
  require(paths.out, "out");
  struct Entry {
    const char* model;
    const char* condition;
    cgat::MetricsReport rep;
  };
  const std::vector<Entry> entries{
      {"baseline", "clean", read_metrics(paths.baseline_clean, "baseline-clean")},
      {"baseline", "attacked", read_metrics(paths.baseline_attacked, "baseline-attacked")},
      {"cgat", "clean", read_metrics(paths.cgat_clean, "cgat-clean")},
      {"cgat", "attacked", read_metrics(paths.cgat_attacked, "cgat-attacked")},
  };

  std::ostringstream table_csv, table_txt, curves;
  table_csv << "model,clean_map,attacked_map,map_drop\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %12s %14s %10s\n", "model", "clean MAP", "attacked MAP", "drop");
  table_txt << line;
  for (std::size_t i = 0; i < entries.size(); i += 2) {
    const double clean = entries[i].rep.map_at_n;
    const double attacked = entries[i + 1].rep.map_at_n;
    table_csv << entries[i].model << ',' << cgat::io::format_double(clean) << ',' << cgat::io::format_double(attacked)
              << ',' << cgat::io::format_double(clean - attacked) << '\n';
    std::snprintf(line, sizeof(line), "%-10s %12.4f %14.4f %10.4f\n", entries[i].model, clean, attacked,
                  clean - attacked);
    table_txt << line;
  }
  const double gain = entries[3].rep.map_at_n - entries[1].rep.map_at_n;
  table_txt << "attacked MAP, cgat minus baseline: " << cgat::io::format_double(gain) << '\n';

  curves << "model,condition,kind,n,recall,precision\n";
  for (const auto& e : entries) {
    for (const auto& p : e.rep.pr_points) {
      curves << e.model << ',' << e.condition << ",pr," << p.cutoff << ',' << cgat::io::format_double(p.recall)
             << ',' << cgat::io::format_double(p.precision) << '\n';
    }
    for (const auto& p : e.rep.pn_points) {
      curves << e.model << ',' << e.condition << ",pn," << p.n << ",," << cgat::io::format_double(p.precision)
             << '\n';
    }
  }
  const fs::path out = paths.out;
  cgat::io::write_text_atomic(with_suffix(out, ".table.csv"), table_csv.str());
  cgat::io::write_text_atomic(with_suffix(out, ".table.txt"), table_txt.str());
  cgat::io::write_text_atomic(with_suffix(out, ".curves.csv"), curves.str());
  echo_config(out, "report", cfg, paths);
  std::fputs(table_txt.str().c_str(), stdout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Center-guided adversarial training for hashing-based retrieval"};
  app.require_subcommand(1, 1);

  Paths paths;
  std::map<std::string, std::string> flag_values;
  const auto knobs = knob_table();

  struct Command {
    const char* name;
    const char* help;
    std::vector<std::string> knobs;
    int (*run)(const RunConfig&, const Paths&);
  };
  const std::vector<std::string> data_knobs{"classes", "dim",   "train-count", "database-count", "query-count",
                                            "noise",   "multi-label-prob", "contrast", "data-seed"};
  const std::vector<std::string> train_knobs{"bits",         "hidden",     "model-seed", "epochs",
                                             "batch-size",   "lr",         "momentum",   "weight-decay",
                                             "quantization-weight", "train-seed", "checkpoint-every", "top-n",
                                             "ap-norm",      "workers"};
  auto cgat_knobs = train_knobs;
  for (const char* k : {"pretrain-epochs", "lambda", "epsilon", "alpha", "iterations"}) cgat_knobs.push_back(k);

  const std::vector<Command> commands{
      {"gen-data", "generate a synthetic dataset file", data_knobs, cmd_gen_data},
      {"train-baseline", "train the undefended model on L_ori", train_knobs, cmd_train_baseline},
      {"train-cgat", "center-guided adversarial training", cgat_knobs, cmd_train_cgat},
      {"attack", "attack the query split, writing an adversarial query file",
       {"attack-epsilon", "attack-alpha", "attack-iterations", "workers"}, cmd_attack},
      {"evaluate", "MAP, PR and P@N of a model", {"top-n", "ap-norm", "workers"}, cmd_evaluate},
      {"chcm-check", "closed-form centers against exhaustive search", {"instances", "check-seed"}, cmd_chcm_check},
      {"grad-check", "tape gradients against central differences", {"grad-models", "check-seed"}, cmd_grad_check},
      {"report", "comparison table and plot-ready curves", {}, cmd_report},
  };

  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", paths.config, "JSON file of knob values");
    for (const auto& name : c.knobs) {
      const auto it = std::find_if(knobs.begin(), knobs.end(), [&](const Knob& k) { return name == k.name; });
      sub->add_option("--" + name, flag_values[name], std::string(it->help) + " (default " + it->value.dump() + ")");
    }
    const std::string cname = c.name;
    if (cname != "chcm-check" && cname != "grad-check" && cname != "report") {
      sub->add_option("--out", paths.out, "output path")->required();
    } else {
      sub->add_option("--out", paths.out, cname == "report" ? "output prefix" : "optional JSON result file");
      if (cname == "report") sub->get_option("--out")->required();
    }
    if (cname != "gen-data" && cname != "chcm-check" && cname != "grad-check" && cname != "report") {
      sub->add_option("--data", paths.data, "dataset file")->required();
    }
    if (cname == "attack" || cname == "evaluate") sub->add_option("--model", paths.model, "checkpoint")->required();
    if (cname == "train-cgat") sub->add_option("--init", paths.init, "warm-start checkpoint");
    if (cname == "evaluate") sub->add_option("--queries", paths.queries, "query file (default: dataset query split)");
    if (cname == "report") {
      sub->add_option("--baseline-clean", paths.baseline_clean, "metrics CSV")->required();
      sub->add_option("--baseline-attacked", paths.baseline_attacked, "metrics CSV")->required();
      sub->add_option("--cgat-clean", paths.cgat_clean, "metrics CSV")->required();
      sub->add_option("--cgat-attacked", paths.cgat_attacked, "metrics CSV")->required();
    }
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    for (const auto& [sub, cmd] : subs) {
      if (!sub->parsed()) continue;
      RunConfig cfg;
      if (!paths.config.empty()) cfg.merge_file(paths.config);
      for (const auto& name : cmd->knobs) {
        if (sub->count("--" + name) > 0) cfg.set(name, flag_values[name]);
      }
      return cmd->run(cfg, paths);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const VerificationFailure& e) {
    std::fprintf(stderr, "verification failed: %s\n", e.what());
    return kVerification;
  } catch (const cgat::io::FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const cgat::diff::ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const cgat::LengthError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kInternal;
}
