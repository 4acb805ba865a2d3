#include "segscribe/run_config.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "segscribe/error.hpp"
#include "segscribe/io.hpp"

namespace segscribe {

namespace {

using Setter = std::function<void(ExperimentPlan&, const std::string&)>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw UsageError(key + ": expected an integer, got '" + v + "'");
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw UsageError(key + ": expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw UsageError(key + ": expected 0 or 1, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& v, F parse) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<T>(parse(key, item)));
  }
  return out;
}

void train_setters(std::map<std::string, Setter>& m, const std::string& prefix,
                   TrainConfig PipelineConfig::*field) {
  auto at = [field](ExperimentPlan& p) -> TrainConfig& { return p.pipeline.*field; };
  m[prefix + ".hidden"] = [=](ExperimentPlan& p, const std::string& v) {
    at(p).hidden = to_list<int>(prefix + ".hidden", v, to_int);
  };
  m[prefix + ".window"] = [=](ExperimentPlan& p, const std::string& v) { at(p).window = static_cast<int>(to_int(prefix, v)); };
  m[prefix + ".batch_size"] = [=](ExperimentPlan& p, const std::string& v) {
    at(p).batch_size = static_cast<int>(to_int(prefix, v));
  };
  m[prefix + ".epochs"] = [=](ExperimentPlan& p, const std::string& v) { at(p).epochs = static_cast<int>(to_int(prefix, v)); };
  m[prefix + ".learning_rate"] = [=](ExperimentPlan& p, const std::string& v) { at(p).learning_rate = to_double(prefix, v); };
  m[prefix + ".momentum"] = [=](ExperimentPlan& p, const std::string& v) { at(p).momentum = to_double(prefix, v); };
  m[prefix + ".weight_decay"] = [=](ExperimentPlan& p, const std::string& v) { at(p).weight_decay = to_double(prefix, v); };
  m[prefix + ".dropout"] = [=](ExperimentPlan& p, const std::string& v) { at(p).dropout = to_double(prefix, v); };
  m[prefix + ".halving_threshold"] = [=](ExperimentPlan& p, const std::string& v) {
    at(p).halving_threshold = to_double(prefix, v);
  };
  m[prefix + ".seed"] = [=](ExperimentPlan& p, const std::string& v) {
    at(p).seed = static_cast<std::uint64_t>(to_int(prefix, v));
  };
}

const std::map<std::string, Setter>& plan_setters() {
  static const std::map<std::string, Setter> m = [] {
    std::map<std::string, Setter> s;
    s["mode"] = [](ExperimentPlan& p, const std::string& v) { p.mode = parse_mode(v); };
    s["fraction"] = [](ExperimentPlan& p, const std::string& v) { p.fraction = to_double("fraction", v); };
    s["labels"] = [](ExperimentPlan& p, const std::string& v) { p.labels = parse_label_source(v); };
    s["model"] = [](ExperimentPlan& p, const std::string& v) { p.model = parse_model_kind(v); };
    s["adapt_method"] = [](ExperimentPlan& p, const std::string& v) { p.adapt_method = parse_adapt_method(v); };
    s["num_folds"] = [](ExperimentPlan& p, const std::string& v) { p.num_folds = static_cast<int>(to_int("num_folds", v)); };
    s["folds_used"] = [](ExperimentPlan& p, const std::string& v) {
      p.folds_used = static_cast<int>(to_int("folds_used", v));
    };
    s["disjoint_vocabulary"] = [](ExperimentPlan& p, const std::string& v) {
      p.disjoint_vocabulary = to_bool("disjoint_vocabulary", v);
    };
    s["seed"] = [](ExperimentPlan& p, const std::string& v) { p.seed = static_cast<std::uint64_t>(to_int("seed", v)); };
    train_setters(s, "frame", &PipelineConfig::frame);
    train_setters(s, "segdnn", &PipelineConfig::segdnn);
    s["heads"] = [](ExperimentPlan& p, const std::string& v) { p.pipeline.heads = v; };
    s["phonological_table"] = [](ExperimentPlan& p, const std::string& v) { p.pipeline.phonological_table = v; };
    s["scrf.max_len"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.scrf_max_len = static_cast<int>(to_int("scrf.max_len", v));
    };
    s["scrf.epochs"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.scrf.epochs = static_cast<int>(to_int("scrf.epochs", v));
    };
    s["scrf.step"] = [](ExperimentPlan& p, const std::string& v) { p.pipeline.scrf.step = to_double("scrf.step", v); };
    s["scrf.l1"] = [](ExperimentPlan& p, const std::string& v) { p.pipeline.scrf.l1 = to_double("scrf.l1", v); };
    s["scrf.l2"] = [](ExperimentPlan& p, const std::string& v) { p.pipeline.scrf.l2 = to_double("scrf.l2", v); };
    s["scrf.seed"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.scrf.seed = static_cast<std::uint64_t>(to_int("scrf.seed", v));
    };
    s["scrf.firstpass_lm"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.firstpass_lm = to_bool("scrf.firstpass_lm", v);
    };
    s["tandem.posterior_dim"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.tandem.posterior_dim = static_cast<int>(to_int("tandem.posterior_dim", v));
    };
    s["tandem.image_dim"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.tandem.image_dim = static_cast<int>(to_int("tandem.image_dim", v));
    };
    s["hmm.states"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.hmm_states = static_cast<int>(to_int("hmm.states", v));
    };
    s["hmm.iterations"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.em.iterations = static_cast<int>(to_int("hmm.iterations", v));
    };
    s["hmm.schedule"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.em.schedule = to_list<int>("hmm.schedule", v, to_int);
    };
    s["hmm.lm_weights"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.hmm_lm_weights = to_list<double>("hmm.lm_weights", v, to_double);
    };
    s["hmm.penalties"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.hmm_penalties = to_list<double>("hmm.penalties", v, to_double);
    };
    s["nbest"] = [](ExperimentPlan& p, const std::string& v) { p.pipeline.nbest = static_cast<int>(to_int("nbest", v)); };
    s["lattice_max_len"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.lattice_max_len = static_cast<int>(to_int("lattice_max_len", v));
    };
    s["adapt.epochs"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.adapt.epochs = static_cast<int>(to_int("adapt.epochs", v));
    };
    s["adapt.learning_rate"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.adapt.learning_rate = to_double("adapt.learning_rate", v);
    };
    s["adapt.momentum"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.adapt.momentum = to_double("adapt.momentum", v);
    };
    s["adapt.batch_size"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.adapt.batch_size = static_cast<int>(to_int("adapt.batch_size", v));
    };
    s["adapt.weight_decay"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.adapt.weight_decay = to_double("adapt.weight_decay", v);
    };
    s["adapt.dropout"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.adapt.dropout = to_double("adapt.dropout", v);
    };
    s["adapt.seed"] = [](ExperimentPlan& p, const std::string& v) {
      p.pipeline.adapt.seed = static_cast<std::uint64_t>(to_int("adapt.seed", v));
    };
    return s;
  }();
  return m;
}

const std::vector<std::string> kOtherKeys = {
    "corpus",           "out",           "synth.preset", "synth.signers", "synth.words", "synth.seed",
    "synth.raster_words", "frontend.mask_frames", "frontend.grids", "eval.rounds"};

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = kOtherKeys;
    for (const auto& [key, _] : plan_setters()) k.push_back(key);
    std::sort(k.begin(), k.end());
    return k;
  }();
  return keys;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (c.has(key)) throw UsageError("config line " + std::to_string(number) + ": repeated key " + key);
    c.set(key, trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  try {
    std::string text;
    for (const auto& l : io::read_lines(path)) text += l + "\n";
    return parse(text);
  } catch (const DataError& e) {
    throw UsageError(std::string("cannot read config: ") + e.what());
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (!std::binary_search(keys.begin(), keys.end(), key)) throw UsageError("unknown config key: " + key);
  values_[key] = value;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  return has(key) ? static_cast<int>(to_int(key, values_.at(key))) : fallback;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? to_double(key, values_.at(key)) : fallback;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::digest() const { return fnv1a_hex(canonical()); }

ExperimentPlan RunConfig::plan() const {
  ExperimentPlan p;
  const auto& setters = plan_setters();
  for (const auto& [k, v] : values_) {
    auto it = setters.find(k);
    if (it != setters.end()) it->second(p, v);
  }
  p.digest = digest();
  return p;
}

}  // namespace segscribe
