#include "tprs/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "tprs/fsio.hpp"

namespace tprs {

namespace {

using nlohmann::json;

std::vector<double> parse_list(const std::string& v, size_t expect,
                               const std::string& key) {
  std::vector<double> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad list entry '" + item + "' for " + key);
    }
  }
  if (expect > 0 && out.size() != expect) {
    throw std::invalid_argument("config: " + key + " expects " +
                                std::to_string(expect) + " entries");
  }
  return out;
}

double num(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number '" + v + "' for " + key);
  }
}

int inum(const std::string& v, const std::string& key) {
  return static_cast<int>(num(v, key));
}

bool bnum(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}

void set_key(RunConfig& rc, const std::string& section, const std::string& key,
             const std::string& value) {
  const std::string where = section.empty() ? key : section + "." + key;
  if (section.empty()) {
    if (key == "preset") return;  // handled in a first pass
    if (key == "seed") {
      rc.seed = static_cast<uint64_t>(std::stoull(value));
      return;
    }
    throw std::invalid_argument("config: unknown key '" + where + "'");
  }
  if (section == "model") {
    auto& m = rc.model;
    if (key == "image_size") m.image_size = inum(value, where);
    else if (key == "cnn_channels") {
      m.cnn_channels.clear();
      for (double d : parse_list(value, 0, where))
        m.cnn_channels.push_back(static_cast<int>(d));
    } else if (key == "cnn_grid") m.cnn_grid = inum(value, where);
    else if (key == "vit_patch") m.vit_patch = inum(value, where);
    else if (key == "vit_dim") m.vit_dim = inum(value, where);
    else if (key == "vit_depth") m.vit_depth = inum(value, where);
    else if (key == "vit_heads") m.vit_heads = inum(value, where);
    else if (key == "vit_mlp_ratio") m.vit_mlp_ratio = num(value, where);
    else if (key == "gcn_hidden") m.gcn_hidden = inum(value, where);
    else if (key == "gcn_layers") m.gcn_layers = inum(value, where);
    else if (key == "gnn_out") m.gnn_out = inum(value, where);
    else if (key == "meta_dim") m.meta_dim = inum(value, where);
    else if (key == "fusion_width") m.fusion_width = inum(value, where);
    else if (key == "num_classes") m.num_classes = inum(value, where);
    else if (key == "cross_heads") m.cross_heads = inum(value, where);
    else if (key == "dropout") m.dropout_rate = num(value, where);
    else if (key == "time_scale") m.time_scale = num(value, where);
    else if (key == "mc_samples") m.mc_samples = inum(value, where);
    else if (key == "variant") m.variant = variant_from_name(value);
    else throw std::invalid_argument("config: unknown key '" + where + "'");
  } else if (section == "preprocess") {
    auto& p = rc.preprocess;
    if (key == "clahe_clip") p.clahe_clip = num(value, where);
    else if (key == "clahe_grid") p.clahe_grid = inum(value, where);
    else if (key == "denoise_sigma") p.denoise_sigma = num(value, where);
    else if (key == "target_size") p.target_size = inum(value, where);
    else if (key == "blur_threshold") p.blur_threshold = num(value, where);
    else if (key == "rot_limit_deg") p.rot_limit_deg = num(value, where);
    else if (key == "brightness_limit") p.brightness_limit = num(value, where);
    else throw std::invalid_argument("config: unknown key '" + where + "'");
  } else if (section == "train") {
    auto& t = rc.train;
    if (key == "epochs") t.epochs = inum(value, where);
    else if (key == "batch_size") t.batch_size = inum(value, where);
    else if (key == "early_stop_patience") t.early_stop_patience = inum(value, where);
    else if (key == "lr_reduce_factor") t.lr_reduce_factor = num(value, where);
    else if (key == "lr_reduce_patience") t.lr_reduce_patience = inum(value, where);
    else if (key == "split") {
      auto v = parse_list(value, 3, where);
      t.split = {v[0], v[1], v[2]};
    } else if (key == "augment") t.augment = bnum(value, where);
    else if (key == "lr_global_multiplier") t.lr_global_multiplier = num(value, where);
    else throw std::invalid_argument("config: unknown key '" + where + "'");
  } else if (section == "loss") {
    auto& l = rc.loss;
    if (key == "alpha") {
      auto v = parse_list(value, 5, where);
      for (int i = 0; i < 5; ++i) l.alpha[static_cast<size_t>(i)] = v[static_cast<size_t>(i)];
    } else if (key == "gamma") l.gamma = num(value, where);
    else if (key == "lambda_mse") l.lambda_mse = num(value, where);
    else throw std::invalid_argument("config: unknown key '" + where + "'");
  } else if (section == "optim") {
    auto& o = rc.optim;
    if (key == "learning_rate") o.learning_rate = num(value, where);
    else if (key == "beta1") o.beta1 = num(value, where);
    else if (key == "beta2") o.beta2 = num(value, where);
    else if (key == "epsilon") o.epsilon = num(value, where);
    else if (key == "weight_decay") o.weight_decay = num(value, where);
    else throw std::invalid_argument("config: unknown key '" + where + "'");
  } else if (section == "cohort") {
    auto& c = rc.cohort;
    if (key == "n") c.n = inum(value, where);
    else if (key == "priors") {
      auto v = parse_list(value, 5, where);
      for (int i = 0; i < 5; ++i) c.class_priors[static_cast<size_t>(i)] = v[static_cast<size_t>(i)];
    } else if (key == "hba1c_mu") c.hba1c_mu = num(value, where);
    else if (key == "hba1c_sigma") c.hba1c_sigma = num(value, where);
    else if (key == "thickness_mu") c.thickness_mu = num(value, where);
    else if (key == "thickness_sigma") c.thickness_sigma = num(value, where);
    else if (key == "vegf_mu") c.vegf_mu = num(value, where);
    else if (key == "vegf_sigma") c.vegf_sigma = num(value, where);
    else if (key == "visits") c.visits = inum(value, where);
    else if (key == "image_size") c.image_size = inum(value, where);
    else if (key == "risk_coef_slope") c.risk_coef_slope = num(value, where);
    else if (key == "risk_coef_drop") c.risk_coef_drop = num(value, where);
    else if (key == "risk_coef_grade") c.risk_coef_grade = num(value, where);
    else if (key == "risk_noise_sigma") c.risk_noise_sigma = num(value, where);
    else if (key == "risk_intercept") c.risk_intercept = num(value, where);
    else if (key == "censoring_fraction") c.censoring_fraction = num(value, where);
    else throw std::invalid_argument("config: unknown key '" + where + "'");
  } else {
    throw std::invalid_argument("config: unknown section '" + section + "'");
  }
}

struct Entry {
  std::string section, key, value;
};

std::vector<Entry> parse_ini(const std::string& text, const std::string& origin) {
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#' || line[first] == ';') continue;
    if (line[first] == '[') {
      const auto close = line.find(']', first);
      if (close == std::string::npos) {
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                    ": unterminated section header");
      }
      section = line.substr(first + 1, close - first - 1);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": expected key = value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    entries.push_back({section, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
  }
  return entries;
}

std::string json_value_to_string(const json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<uint64_t>());
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_array()) {
    std::string out;
    for (const auto& item : v) {
      if (!out.empty()) out += ",";
      out += json_value_to_string(item, where);
    }
    return out;
  }
  throw std::invalid_argument("config: unsupported value type at " + where);
}

std::vector<Entry> parse_json_entries(const std::string& text,
                                      const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(origin + ": JSON parse error: " + e.what());
  }
  if (!root.is_object()) {
    throw std::invalid_argument(origin + ": top-level JSON object expected");
  }
  std::vector<Entry> entries;
  for (const auto& [k, v] : root.items()) {
    if (v.is_object()) {
      for (const auto& [k2, v2] : v.items()) {
        entries.push_back({k, k2, json_value_to_string(v2, k + "." + k2)});
      }
    } else {
      entries.push_back({"", k, json_value_to_string(v, k)});
    }
  }
  return entries;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  preprocess.validate();
  train.validate();
  loss.validate();
  optim.validate();
  cohort.validate();
}

RunConfig default_run_config(const std::string& preset) {
  RunConfig rc;
  rc.preset = preset;
  if (preset == "desk-scale") {
    rc.model = ModelConfig::desk_scale();
  } else if (preset == "paper-scale") {
    rc.model = ModelConfig::paper_scale();
    rc.preprocess.target_size = 224;
    rc.cohort.image_size = 224;
  } else {
    throw std::invalid_argument("unknown preset '" + preset +
                                "' (expected desk-scale or paper-scale)");
  }
  return rc;
}

RunConfig parse_run_config_text(const std::string& text,
                                const std::string& origin) {
  const auto first = text.find_first_not_of(" \t\r\n");
  std::vector<Entry> entries;
  if (first != std::string::npos && text[first] == '{') {
    entries = parse_json_entries(text, origin);
  } else {
    entries = parse_ini(text, origin);
  }

  // the preset establishes defaults, remaining keys override in order
  std::string preset = "desk-scale";
  for (const auto& e : entries) {
    if (e.section.empty() && e.key == "preset") preset = e.value;
  }
  RunConfig rc = default_run_config(preset);
  for (const auto& e : entries) set_key(rc, e.section, e.key, e.value);
  rc.validate();
  return rc;
}

RunConfig parse_run_config(const std::string& path) {
  return parse_run_config_text(read_bytes(path), path);
}

void apply_env_seed(RunConfig& rc) {
  if (const char* env = std::getenv("TPRS_SEED")) {
    rc.seed = static_cast<uint64_t>(std::stoull(env));
  }
}

std::string run_config_summary(const RunConfig& rc) {
  std::ostringstream os;
  os << "preset=" << rc.preset << " seed=" << rc.seed
     << " variant=" << variant_name(rc.model.variant)
     << " image_size=" << rc.model.image_size << " epochs=" << rc.train.epochs
     << " batch_size=" << rc.train.batch_size
     << " lr=" << rc.optim.learning_rate
     << " dropout=" << rc.model.dropout_rate
     << " mc_samples=" << rc.model.mc_samples;
  return os.str();
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["image_size"] = cfg.image_size;
  j["image_channels"] = cfg.image_channels;
  j["cnn_channels"] = cfg.cnn_channels;
  j["cnn_grid"] = cfg.cnn_grid;
  j["vit_patch"] = cfg.vit_patch;
  j["vit_dim"] = cfg.vit_dim;
  j["vit_depth"] = cfg.vit_depth;
  j["vit_heads"] = cfg.vit_heads;
  j["vit_mlp_ratio"] = cfg.vit_mlp_ratio;
  j["gcn_hidden"] = cfg.gcn_hidden;
  j["gcn_layers"] = cfg.gcn_layers;
  j["gnn_out"] = cfg.gnn_out;
  j["meta_dim"] = cfg.meta_dim;
  j["fusion_width"] = cfg.fusion_width;
  j["num_classes"] = cfg.num_classes;
  j["cross_heads"] = cfg.cross_heads;
  j["dropout_rate"] = cfg.dropout_rate;
  j["time_scale"] = cfg.time_scale;
  j["mc_samples"] = cfg.mc_samples;
  j["variant"] = variant_name(cfg.variant);
  return j.dump();
}

ModelConfig model_config_from_json_text(const std::string& text) {
  json j = json::parse(text);
  ModelConfig cfg;
  cfg.image_size = j.at("image_size").get<int>();
  cfg.image_channels = j.at("image_channels").get<int>();
  cfg.cnn_channels = j.at("cnn_channels").get<std::vector<int>>();
  cfg.cnn_grid = j.at("cnn_grid").get<int>();
  cfg.vit_patch = j.at("vit_patch").get<int>();
  cfg.vit_dim = j.at("vit_dim").get<int>();
  cfg.vit_depth = j.at("vit_depth").get<int>();
  cfg.vit_heads = j.at("vit_heads").get<int>();
  cfg.vit_mlp_ratio = j.at("vit_mlp_ratio").get<double>();
  cfg.gcn_hidden = j.at("gcn_hidden").get<int>();
  cfg.gcn_layers = j.at("gcn_layers").get<int>();
  cfg.gnn_out = j.at("gnn_out").get<int>();
  cfg.meta_dim = j.at("meta_dim").get<int>();
  cfg.fusion_width = j.at("fusion_width").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.cross_heads = j.at("cross_heads").get<int>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.time_scale = j.at("time_scale").get<double>();
  cfg.mc_samples = j.at("mc_samples").get<int>();
  cfg.variant = variant_from_name(j.at("variant").get<std::string>());
  cfg.validate();
  return cfg;
}

}  // namespace tprs
