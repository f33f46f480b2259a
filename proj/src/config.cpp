#include "spm/config.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace spm {

namespace fs = std::filesystem;

namespace {

json spm_to_json(const SpmParams& p) {
  return json{{"nu_options", p.nu_options}, {"a_start", p.a_start}, {"a_end", p.a_end},
              {"b", p.b},                   {"rho", p.rho},         {"overlap_fraction", p.overlap_fraction},
              {"blend", p.blend}};
}

SpmParams spm_from_json(const json& j) {
  SpmParams p;
  p.nu_options = j.at("nu_options").get<std::vector<int>>();
  p.a_start = j.at("a_start").get<double>();
  p.a_end = j.at("a_end").get<double>();
  p.b = j.at("b").get<double>();
  p.rho = j.at("rho").get<double>();
  p.overlap_fraction = j.at("overlap_fraction").get<double>();
  p.blend = j.at("blend").get<bool>();
  return p;
}

bool is_integer(const json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

// Whether `value` may replace `def` without changing the field's type.
bool compatible(const json& def, const json& value) {
  if (def.is_number_unsigned()) return value.is_number_unsigned() || (value.is_number_integer() && value.get<long long>() >= 0);
  if (is_integer(def)) return is_integer(value);
  if (def.is_number()) return value.is_number();
  if (def.is_array()) {
    if (!value.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& v : value) {
      if (!compatible(def.front(), v)) return false;
    }
    return true;
  }
  return def.type() == value.type();
}

bool is_domain_path(const std::string& path) {
  return path == "data.source_domain" || path == "data.target_domain";
}

void merge_strict(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw std::invalid_argument("config: '" + path + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw std::invalid_argument("config: unknown key '" + here + "'");
    json& slot = base[key];
    if (is_domain_path(here) && value.is_string()) {
      slot = domain_to_json(domain_by_name(value.get<std::string>()));
    } else if (slot.is_object()) {
      merge_strict(slot, value, here);
    } else if (!compatible(slot, value)) {
      throw std::invalid_argument("config: '" + here + "' expects a value like " + slot.dump() + ", got " +
                                  value.dump());
    } else {
      slot = value;
    }
  }
}

void collect_leaves(const json& node, const std::string& path, std::vector<std::string>& out) {
  for (const auto& [key, value] : node.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (value.is_object()) {
      collect_leaves(value, here, out);
    } else {
      out.push_back(here);
    }
  }
}

std::string last_component(const std::string& path) {
  const auto dot = path.rfind('.');
  return dot == std::string::npos ? path : path.substr(dot + 1);
}

std::string resolve_key(const json& doc, const std::string& key, const std::string& prefer) {
  if (key.find('.') != std::string::npos) return key;
  std::vector<std::string> leaves;
  collect_leaves(doc, "", leaves);
  if (doc.contains(key)) return key;
  std::vector<std::string> hits;
  for (const auto& leaf : leaves) {
    if (last_component(leaf) == key) hits.push_back(leaf);
  }
  // Whole domain objects can be overridden by preset name.
  for (const char* d : {"data.source_domain", "data.target_domain"}) {
    if (last_component(d) == key) hits.push_back(d);
  }
  if (hits.empty()) throw std::invalid_argument("config: unknown key '" + key + "'");
  if (hits.size() == 1) return hits.front();
  if (!prefer.empty()) {
    std::vector<std::string> preferred;
    for (const auto& h : hits) {
      if (h.rfind(prefer + ".", 0) == 0) preferred.push_back(h);
    }
    if (preferred.size() == 1) return preferred.front();
  }
  std::string list;
  for (const auto& h : hits) list += (list.empty() ? "" : ", ") + h;
  throw std::invalid_argument("config: key '" + key + "' is ambiguous (" + list + "); use the dotted path");
}

}  // namespace

json to_json(const RunConfig& cfg) {
  const ExperimentConfig& e = cfg.experiment;
  const SourceConfig& s = e.source;
  const AdaptConfig& a = e.adapt;
  return json{
      {"seed", cfg.seed},
      {"seeds", e.seeds},
      {"arch", arch_to_json(e.arch)},
      {"source",
       {{"epochs", s.epochs},
        {"batch_size", s.batch_size},
        {"lr", s.lr},
        {"momentum", s.momentum},
        {"weight_decay", s.weight_decay}}},
      {"adapt",
       {{"epochs", a.epochs},
        {"batch_size", a.batch_size},
        {"lr", a.lr},
        {"sgd_momentum", a.sgd_momentum},
        {"weight_decay", a.weight_decay},
        {"k_neighbors", a.k_neighbors},
        {"reweight", a.reweight},
        {"bank_capacity", a.bank_capacity},
        {"temperature", a.temperature},
        {"ema_momentum", a.ema_momentum},
        {"nu_per_batch", a.nu_per_batch},
        {"eval_every", a.eval_every},
        {"spm", spm_to_json(a.spm)},
        {"warmup", {{"warmup_fraction", a.warmup.warmup_fraction}, {"normalize_batch", a.warmup.normalize_batch}}}}},
      {"data",
       {{"source_domain", domain_to_json(e.source_domain)},
        {"target_domain", domain_to_json(e.target_domain)},
        {"n_source", e.n_source},
        {"n_target", e.n_target},
        {"n_source_test", e.n_source_test},
        {"n_target_test", e.n_target_test}}},
      {"paths",
       {{"out", cfg.paths.out},
        {"checkpoint", cfg.paths.checkpoint},
        {"source_data", cfg.paths.source_data},
        {"target_data", cfg.paths.target_data},
        {"eval_data", cfg.paths.eval_data}}}};
}

RunConfig run_config_from_json(const json& doc) {
  json full = to_json(RunConfig{});
  merge_strict(full, doc, "");

  RunConfig cfg;
  ExperimentConfig& e = cfg.experiment;
  cfg.seed = full.at("seed").get<std::uint64_t>();
  e.seeds = full.at("seeds").get<std::vector<std::uint64_t>>();
  e.arch = arch_from_json(full.at("arch"));

  const json& s = full.at("source");
  e.source.epochs = s.at("epochs").get<int>();
  e.source.batch_size = s.at("batch_size").get<int>();
  e.source.lr = s.at("lr").get<double>();
  e.source.momentum = s.at("momentum").get<double>();
  e.source.weight_decay = s.at("weight_decay").get<double>();

  const json& a = full.at("adapt");
  e.adapt.epochs = a.at("epochs").get<int>();
  e.adapt.batch_size = a.at("batch_size").get<int>();
  e.adapt.lr = a.at("lr").get<double>();
  e.adapt.sgd_momentum = a.at("sgd_momentum").get<double>();
  e.adapt.weight_decay = a.at("weight_decay").get<double>();
  e.adapt.k_neighbors = a.at("k_neighbors").get<int>();
  e.adapt.reweight = a.at("reweight").get<bool>();
  e.adapt.bank_capacity = a.at("bank_capacity").get<std::size_t>();
  e.adapt.temperature = a.at("temperature").get<double>();
  e.adapt.ema_momentum = a.at("ema_momentum").get<double>();
  e.adapt.nu_per_batch = a.at("nu_per_batch").get<bool>();
  e.adapt.eval_every = a.at("eval_every").get<int>();
  e.adapt.spm = spm_from_json(a.at("spm"));
  e.adapt.warmup.warmup_fraction = a.at("warmup").at("warmup_fraction").get<double>();
  e.adapt.warmup.normalize_batch = a.at("warmup").at("normalize_batch").get<bool>();

  const json& d = full.at("data");
  e.source_domain = domain_from_json(d.at("source_domain"));
  e.target_domain = domain_from_json(d.at("target_domain"));
  e.n_source = d.at("n_source").get<std::size_t>();
  e.n_target = d.at("n_target").get<std::size_t>();
  e.n_source_test = d.at("n_source_test").get<std::size_t>();
  e.n_target_test = d.at("n_target_test").get<std::size_t>();

  const json& p = full.at("paths");
  cfg.paths.out = p.at("out").get<std::string>();
  cfg.paths.checkpoint = p.at("checkpoint").get<std::string>();
  cfg.paths.source_data = p.at("source_data").get<std::string>();
  cfg.paths.target_data = p.at("target_data").get<std::string>();
  cfg.paths.eval_data = p.at("eval_data").get<std::string>();

  e.source.validate();
  e.adapt.validate();
  return cfg;
}

void apply_override(json& doc, const std::string& assignment, const std::string& prefer) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' is not of the form key=value");
  }
  const std::string path = resolve_key(doc, assignment.substr(0, eq), prefer);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  // Rebuild the override as a nested object and merge it strictly, so the
  // same key and type checks apply as for config files.
  json patch = value;
  std::string rest = path;
  for (auto dot = rest.rfind('.'); dot != std::string::npos; dot = rest.rfind('.')) {
    patch = json{{rest.substr(dot + 1), patch}};
    rest.resize(dot);
  }
  patch = json{{rest, patch}};
  merge_strict(doc, patch, "");
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                          const std::string& prefer) {
  json doc = to_json(RunConfig{});
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json user;
    try {
      user = json::parse(in);
    } catch (const json::exception& e) {
      throw std::runtime_error("config file " + path + " is not valid JSON: " + e.what());
    }
    merge_strict(doc, user, "");
  }
  for (const auto& o : overrides) apply_override(doc, o, prefer);
  return run_config_from_json(doc);
}

void write_resolved_config(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path file = fs::path(dir) / "config.resolved.json";
  std::ofstream out(file);
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + file.string());
}

}  // namespace spm
