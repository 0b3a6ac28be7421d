#include "hornn/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace hornn {

namespace {

// One entry per knob keeps the key list, the JSON echo and the file loader
// in lockstep.
template <class F>
void visit_fields(RunConfig& rc, F&& f) {
  f("order", rc.order);
  f("hidden", rc.hidden);
  f("pooling", rc.pooling);
  f("alpha", rc.alpha);
  f("activation", rc.activation);
  f("seed", rc.seed);
  f("init_std", rc.init_std);
  f("bias", rc.bias);
  f("lr", rc.lr);
  f("momentum", rc.momentum);
  f("weight_decay", rc.weight_decay);
  f("clip", rc.clip);
  f("col_norm", rc.col_norm);
  f("schedule", rc.schedule);
  f("epochs", rc.epochs);
  f("batch", rc.batch);
  f("bptt", rc.bptt);
  f("corpus", rc.corpus);
  f("valid", rc.valid);
  f("test", rc.test);
  f("min_count", rc.min_count);
  f("unk", rc.unk);
  f("eos", rc.eos);
  f("add_eos", rc.add_eos);
  f("out", rc.out);
  f("precision", rc.precision);
  f("jobs", rc.jobs);
  f("values", rc.values);
  f("checkpoint", rc.checkpoint);
  f("vocab_file", rc.vocab_file);
  f("histogram", rc.histogram);
  f("stats", rc.stats);
  f("inject_fault", rc.inject_fault);
  f("tolerance", rc.tolerance);
  f("resume", rc.resume);
}

template <class T>
void assign_field(const std::string& key, const nlohmann::json& v, T& field) {
  try {
    field = v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ContractViolation("config key '" + key + "' has the wrong type (" +
                            v.dump() + ")");
  }
}

}  // namespace

nlohmann::ordered_json to_json(const RunConfig& rc) {
  nlohmann::ordered_json j;
  visit_fields(const_cast<RunConfig&>(rc),
               [&](const char* key, auto& field) { j[key] = field; });
  return j;
}

void apply_json(RunConfig& rc, const nlohmann::json& j) {
  if (!j.is_object())
    throw ContractViolation("config must be a flat object of key/value "
                            "assignments");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    visit_fields(rc, [&](const char* name, auto& field) {
      if (key == name) {
        assign_field(key, value, field);
        known = true;
      }
    });
    if (!known) throw ContractViolation("unknown config key '" + key + "'");
  }
}

void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ContractViolation("config file " + path +
                              " is not valid JSON: " + e.what());
    }
    apply_json(rc, j);
    return;
  }

  nlohmann::json flat = nlohmann::json::object();
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ContractViolation("config file " + path + " line " +
                              std::to_string(lineno) +
                              ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ContractViolation("config file " + path + " line " +
                              std::to_string(lineno) + ": empty key");
    const nlohmann::json parsed =
        nlohmann::json::parse(value, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded())
      flat[key] = value;  // bare word, e.g. an unquoted path
    else
      flat[key] = parsed;
  }
  apply_json(rc, flat);
}

void validate_run_config(const RunConfig& rc) {
  const Pooling pooling = pooling_from_string(rc.pooling);
  activation_from_string(rc.activation);
  schedule_from_string(rc.schedule);
  if (rc.order < 1) throw ContractViolation("order must be >= 1");
  if (rc.hidden < 1) throw ContractViolation("hidden must be >= 1");
  if (rc.init_std <= 0.0) throw ContractViolation("init_std must be > 0");
  if (pooling == Pooling::kFofe && !(rc.alpha > 0.0 && rc.alpha < 1.0))
    throw ContractViolation("alpha must lie in (0,1) for fofe pooling, got " +
                            std::to_string(rc.alpha));
  if (rc.lr <= 0.0) throw ContractViolation("lr must be > 0");
  if (!(rc.momentum >= 0.0 && rc.momentum < 1.0))
    throw ContractViolation("momentum must lie in [0,1)");
  if (rc.weight_decay < 0.0)
    throw ContractViolation("weight_decay must be >= 0");
  if (rc.epochs < 0) throw ContractViolation("epochs must be >= 0");
  if (rc.batch < 1) throw ContractViolation("batch must be >= 1");
  if (rc.bptt < 1) throw ContractViolation("bptt must be >= 1");
  if (rc.min_count < 0) throw ContractViolation("min_count must be >= 0");
  if (rc.precision != 32 && rc.precision != 64)
    throw ContractViolation("precision must be 32 or 64");
  if (rc.jobs < 1) throw ContractViolation("jobs must be >= 1");
  if (rc.tolerance <= 0.0) throw ContractViolation("tolerance must be > 0");
}

std::vector<double> parse_sweep_values(const std::string& spec) {
  if (spec.empty()) throw ContractViolation("empty sweep value list");
  auto parse_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw ContractViolation("bad sweep value '" + s + "'");
    }
    if (used != s.size())
      throw ContractViolation("bad sweep value '" + s + "'");
    return v;
  };

  if (const auto dots = spec.find(".."); dots != std::string::npos) {
    const std::string from = spec.substr(0, dots);
    std::string rest = spec.substr(dots + 2);
    double step = 0.1;
    if (const auto colon = rest.find(':'); colon != std::string::npos) {
      step = parse_double(rest.substr(colon + 1));
      rest = rest.substr(0, colon);
    }
    const double lo = parse_double(from);
    const double hi = parse_double(rest);
    if (step <= 0.0 || hi < lo)
      throw ContractViolation("bad sweep range '" + spec + "'");
    std::vector<double> out;
    for (double v = lo; v <= hi + step * 1e-9; v += step) out.push_back(v);
    return out;
  }

  std::vector<double> out;
  std::istringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(parse_double(item));
  }
  if (out.empty()) throw ContractViolation("empty sweep value list");
  return out;
}

RunRecipe recipe_from_config(const RunConfig& rc) {
  RunRecipe r;
  r.model.order = rc.order;
  r.model.hidden = rc.hidden;
  r.model.pooling = pooling_from_string(rc.pooling);
  r.model.alpha = rc.alpha;
  r.model.activation = activation_from_string(rc.activation);
  r.model.seed = rc.seed;
  r.model.init_std = rc.init_std;
  r.model.bias = rc.bias;
  r.lr = rc.lr;
  r.momentum_coef = rc.momentum;
  r.weight_decay = rc.weight_decay;
  r.column_norm_cap = rc.col_norm;
  r.train.epochs = rc.epochs;
  r.train.lanes = rc.batch;
  r.train.window = rc.bptt;
  r.train.clip = rc.clip;
  r.train.schedule = schedule_from_string(rc.schedule);
  return r;
}

TokenizerOptions tokenizer_from_config(const RunConfig& rc) {
  TokenizerOptions t;
  t.unk = rc.unk;
  t.eos = rc.eos;
  t.add_eos = rc.add_eos;
  t.min_count = rc.min_count;
  return t;
}

}  // namespace hornn
