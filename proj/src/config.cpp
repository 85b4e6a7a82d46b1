#include "eyeadapt/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "eyeadapt/errors.hpp"

namespace eyeadapt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

// Removes a trailing # comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_str && c == '\\') {
      ++i;
    } else if (c == '"') {
      in_str = !in_str;
    } else if (c == '#' && !in_str) {
      return line.substr(0, i);
    }
  }
  return line;
}

std::string parse_string(const std::string& text, const std::string& where) {
  if (text.size() < 2 || text.front() != '"' || text.back() != '"') {
    throw ConfigError(where + ": malformed string " + text);
  }
  std::string out;
  for (std::size_t i = 1; i + 1 < text.size(); ++i) {
    char c = text[i];
    if (c == '\\') {
      if (i + 2 >= text.size()) throw ConfigError(where + ": dangling escape");
      c = text[++i];
      if (c == 'n') c = '\n';
      else if (c == 't') c = '\t';
      else if (c != '"' && c != '\\') throw ConfigError(where + ": unknown escape \\" + std::string(1, c));
    } else if (c == '"') {
      throw ConfigError(where + ": unescaped quote in string");
    }
    out.push_back(c);
  }
  return out;
}

bool parse_number(const std::string& text, double& out) {
  std::string t;
  for (char c : text) {
    if (c != '_') t.push_back(c);
  }
  if (!t.empty() && t.front() == '+') t.erase(0, 1);
  const auto* end = t.data() + t.size();
  const auto res = std::from_chars(t.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && !t.empty();
}

std::vector<std::string> split_array(const std::string& body, const std::string& where) {
  std::vector<std::string> items;
  std::string cur;
  bool in_str = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (in_str && c == '\\') {
      cur.push_back(c);
      if (i + 1 < body.size()) cur.push_back(body[++i]);
      continue;
    }
    if (c == '"') in_str = !in_str;
    if (c == ',' && !in_str) {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (in_str) throw ConfigError(where + ": unterminated string in array");
  const auto last = trim(cur);
  if (!last.empty()) items.push_back(last);
  for (const auto& it : items) {
    if (it.empty()) throw ConfigError(where + ": empty array element");
  }
  return items;
}

}  // namespace

ConfigValue parse_config_value(const std::string& raw, const std::string& where) {
  const auto text = trim(raw);
  if (text.empty()) throw ConfigError(where + ": missing value");
  if (text == "true") return true;
  if (text == "false") return false;
  if (text.front() == '"') return parse_string(text, where);
  if (text.front() == '[') {
    if (text.back() != ']') throw ConfigError(where + ": unterminated array");
    const auto items = split_array(text.substr(1, text.size() - 2), where);
    if (items.empty()) return std::vector<double>{};
    if (items.front().front() == '"') {
      std::vector<std::string> out;
      for (const auto& it : items) out.push_back(parse_string(it, where));
      return out;
    }
    std::vector<double> out;
    for (const auto& it : items) {
      double v;
      if (!parse_number(it, v)) throw ConfigError(where + ": arrays must hold only strings or only numbers");
      out.push_back(v);
    }
    return out;
  }
  double v;
  if (parse_number(text, v)) return v;
  throw ConfigError(where + ": cannot parse value '" + text + "'");
}

ConfigDoc ConfigDoc::parse(const std::string& text, const std::string& origin) {
  ConfigDoc doc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = origin + ":" + std::to_string(lineno);
    const auto body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      if (!valid_name(section)) throw ConfigError(where + ": bad section name '" + section + "'");
      doc.sections_[section];
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const auto key = trim(body.substr(0, eq));
    if (!valid_name(key)) throw ConfigError(where + ": bad key '" + key + "'");
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' appears before any [section]");
    if (doc.has(section, key)) throw ConfigError(where + ": duplicate key '" + section + "." + key + "'");
    doc.sections_[section][key] = parse_config_value(body.substr(eq + 1), where + " (" + section + "." + key + ")");
  }
  return doc;
}

ConfigDoc ConfigDoc::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

const ConfigValue* ConfigDoc::find(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  const auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

void ConfigDoc::set(const std::string& section, const std::string& key, ConfigValue value) {
  sections_[section][key] = std::move(value);
}

void ConfigDoc::set_from_text(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const auto section = trim(assignment.substr(0, dot));
  const auto key = trim(assignment.substr(dot + 1, eq - dot - 1));
  auto text = trim(assignment.substr(eq + 1));
  ConfigValue v;
  try {
    v = parse_config_value(text, "override " + section + "." + key);
  } catch (const ConfigError&) {
    v = text;  // bare words are taken as strings on the command line
  }
  set(section, key, std::move(v));
}

nlohmann::json ConfigDoc::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [section, kv] : sections_) {
    auto& s = j[section] = nlohmann::json::object();
    for (const auto& [key, value] : kv) {
      std::visit([&](const auto& v) { s[key] = v; }, value);
    }
  }
  return j;
}

// ---------------------------------------------------------------------------

const std::map<std::string, std::vector<std::string>>& known_config_keys() {
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"global", {"seed", "output_root", "deterministic"}},
      {"datakit", {"source_count", "target_count", "height", "width"}},
      {"translate",
       {"modes", "epochs", "batch_size", "lr", "beta1", "beta2", "gamma_cyc", "gamma_id", "gamma_edge", "gamma_mean",
        "gamma_var", "base_width", "residual_blocks", "identity_init", "disc_blocks", "disc_stride", "leaky_slope",
        "checkpoint_every", "image_pool"}},
      {"filterkit",
       {"dataset", "threshold", "threshold_rule", "epochs", "pairs_per_epoch", "batch_size", "lr", "margin",
        "latent_dim", "base_width", "backbone"}},
      {"segkit",
       {"modes", "datasets", "n_real", "epochs", "epoch_multiplier", "batch_size", "lr", "folds", "augment", "w_gdl",
        "w_bal", "w_surf", "bal_beta", "grl_scale", "grl_ramp_steps", "balance_domains", "base_width", "down_blocks",
        "classifier_hidden"}},
      {"evalkit", {"pca_fit"}},
  };
  return keys;
}

namespace {

class Reader {
 public:
  explicit Reader(const ConfigDoc& doc) : doc_(doc) {}

  double number(const std::string& s, const std::string& k, double def) const {
    const auto* v = doc_.find(s, k);
    if (!v) return def;
    if (const auto* d = std::get_if<double>(v)) return *d;
    throw ConfigError(s + "." + k + ": expected a number");
  }

  long long integer(const std::string& s, const std::string& k, long long def) const {
    const double d = number(s, k, static_cast<double>(def));
    if (std::floor(d) != d || std::abs(d) > 9.0e15) throw ConfigError(s + "." + k + ": expected an integer");
    return static_cast<long long>(d);
  }

  int small_int(const std::string& s, const std::string& k, int def) const {
    const auto v = integer(s, k, def);
    if (v < -1'000'000'000 || v > 1'000'000'000) throw ConfigError(s + "." + k + ": value out of range");
    return static_cast<int>(v);
  }

  bool boolean(const std::string& s, const std::string& k, bool def) const {
    const auto* v = doc_.find(s, k);
    if (!v) return def;
    if (const auto* b = std::get_if<bool>(v)) return *b;
    throw ConfigError(s + "." + k + ": expected true or false");
  }

  std::string string(const std::string& s, const std::string& k, const std::string& def) const {
    const auto* v = doc_.find(s, k);
    if (!v) return def;
    if (const auto* str = std::get_if<std::string>(v)) return *str;
    throw ConfigError(s + "." + k + ": expected a string");
  }

  std::vector<std::string> strings(const std::string& s, const std::string& k,
                                   const std::vector<std::string>& def) const {
    const auto* v = doc_.find(s, k);
    if (!v) return def;
    if (const auto* a = std::get_if<std::vector<std::string>>(v)) return *a;
    if (const auto* str = std::get_if<std::string>(v)) return {*str};
    if (const auto* d = std::get_if<std::vector<double>>(v); d && d->empty()) return {};
    throw ConfigError(s + "." + k + ": expected an array of strings");
  }

  std::vector<int> ints(const std::string& s, const std::string& k, const std::vector<int>& def) const {
    const auto* v = doc_.find(s, k);
    if (!v) return def;
    std::vector<double> raw;
    if (const auto* a = std::get_if<std::vector<double>>(v)) raw = *a;
    else if (const auto* d = std::get_if<double>(v)) raw = {*d};
    else throw ConfigError(s + "." + k + ": expected an array of integers");
    std::vector<int> out;
    for (double d : raw) {
      if (std::floor(d) != d || d < 0 || d > 1e9) throw ConfigError(s + "." + k + ": expected non-negative integers");
      out.push_back(static_cast<int>(d));
    }
    return out;
  }

 private:
  const ConfigDoc& doc_;
};

}  // namespace

PipelineConfig pipeline_config(const ConfigDoc& doc) {
  const auto& known = known_config_keys();
  for (const auto& [section, kv] : doc.sections()) {
    const auto it = known.find(section);
    if (it == known.end()) throw ConfigError("unknown config section '" + section + "'");
    for (const auto& [key, value] : kv) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        throw ConfigError("unknown config key '" + section + "." + key + "'");
      }
    }
  }

  const Reader r(doc);
  PipelineConfig cfg;
  cfg.doc = doc;
  const auto seed = r.integer("global", "seed", 0);
  if (seed < 0) throw ConfigError("global.seed must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.deterministic = r.boolean("global", "deterministic", true);
  cfg.output_root = r.string("global", "output_root", cfg.output_root.string());
  if (const char* env = std::getenv("EYEADAPT_OUTPUT_ROOT"); env && *env) cfg.output_root = env;

  auto& d = cfg.data;
  d.source_count = r.small_int("datakit", "source_count", d.source_count);
  d.target_count = r.small_int("datakit", "target_count", d.target_count);
  d.height = r.small_int("datakit", "height", d.height);
  d.width = r.small_int("datakit", "width", d.width);
  if (d.source_count < 1 || d.target_count < 1) throw ConfigError("datakit counts must be >= 1");
  if (d.height < 16 || d.width < 16) throw ConfigError("datakit dims must be at least 16x16");

  auto& t = cfg.translate;
  cfg.translate_modes.clear();
  for (const auto& m : r.strings("translate", "modes", {"cgan", "srcgan"})) cfg.translate_modes.push_back(parse_translate_mode(m));
  t.seed = cfg.seed;
  t.epochs = r.small_int("translate", "epochs", t.epochs);
  t.batch_size = r.small_int("translate", "batch_size", t.batch_size);
  t.lr = r.number("translate", "lr", t.lr);
  t.beta1 = r.number("translate", "beta1", t.beta1);
  t.beta2 = r.number("translate", "beta2", t.beta2);
  t.weights.cycle = r.number("translate", "gamma_cyc", t.weights.cycle);
  t.weights.identity = r.number("translate", "gamma_id", t.weights.identity);
  t.weights.edge = r.number("translate", "gamma_edge", t.weights.edge);
  t.weights.mean = r.number("translate", "gamma_mean", t.weights.mean);
  t.weights.var = r.number("translate", "gamma_var", t.weights.var);
  t.checkpoint_every = r.small_int("translate", "checkpoint_every", t.checkpoint_every);
  t.image_pool = r.boolean("translate", "image_pool", t.image_pool);
  t.generator.base_width = r.small_int("translate", "base_width", t.generator.base_width);
  t.generator.residual_blocks = r.small_int("translate", "residual_blocks", t.generator.residual_blocks);
  t.generator.identity_init = r.boolean("translate", "identity_init", t.generator.identity_init);
  t.generator.height = t.discriminator.height = d.height;
  t.generator.width = t.discriminator.width = d.width;
  t.discriminator.base_width = t.generator.base_width;
  t.discriminator.blocks = r.small_int("translate", "disc_blocks", t.discriminator.blocks);
  t.discriminator.stride = r.small_int("translate", "disc_stride", t.discriminator.stride);
  t.discriminator.leaky_slope = r.number("translate", "leaky_slope", t.discriminator.leaky_slope);
  validate(t);

  auto& f = cfg.filter;
  f.dataset = r.string("filterkit", "dataset", f.dataset);
  f.threshold = r.number("filterkit", "threshold", f.threshold);
  const auto rule = r.string("filterkit", "threshold_rule", "fixed");
  if (rule == "fixed") f.rule = ThresholdRule::kFixed;
  else if (rule == "mean") f.rule = ThresholdRule::kMean;
  else throw ConfigError("filterkit.threshold_rule must be \"fixed\" or \"mean\"");
  if (!(f.threshold > 0.0)) throw ConfigError("filterkit.threshold must be positive");
  auto& s = f.siamese;
  s.seed = cfg.seed ^ 0x51a3e5eULL;
  s.epochs = r.small_int("filterkit", "epochs", s.epochs);
  s.pairs_per_epoch = r.small_int("filterkit", "pairs_per_epoch", s.pairs_per_epoch);
  s.batch_size = r.small_int("filterkit", "batch_size", s.batch_size);
  s.lr = r.number("filterkit", "lr", s.lr);
  s.margin = r.number("filterkit", "margin", s.margin);
  s.encoder.latent_dim = r.small_int("filterkit", "latent_dim", s.encoder.latent_dim);
  s.encoder.base_width = r.small_int("filterkit", "base_width", s.encoder.base_width);
  const auto backbone = r.string("filterkit", "backbone", "small-conv");
  if (backbone == "small-conv") s.encoder.backbone = SiameseBackbone::kSmallConv;
  else if (backbone == "inceptionv4") s.encoder.backbone = SiameseBackbone::kInceptionV4;
  else throw ConfigError("filterkit.backbone must be \"small-conv\" or \"inceptionv4\"");
  s.encoder.height = d.height;
  s.encoder.width = d.width;
  validate(s);

  auto& g = cfg.seg;
  g.modes.clear();
  for (const auto& m : r.strings("segkit", "modes", {"ritnet"})) g.modes.push_back(parse_seg_mode(m));
  g.datasets = r.strings("segkit", "datasets", g.datasets);
  for (const auto& name : g.datasets) {
    if (name.empty() || name.find_first_of("/\\,. ") != std::string::npos) {
      throw ConfigError("segkit.datasets: bad dataset name '" + name + "'");
    }
  }
  g.n_real = r.ints("segkit", "n_real", g.n_real);
  auto& b = g.base;
  b.seed = cfg.seed;
  b.epochs = r.small_int("segkit", "epochs", b.epochs);
  b.epoch_multiplier = r.number("segkit", "epoch_multiplier", b.epoch_multiplier);
  b.batch_size = r.small_int("segkit", "batch_size", b.batch_size);
  b.lr = r.number("segkit", "lr", b.lr);
  b.folds = r.small_int("segkit", "folds", b.folds);
  b.augment = r.boolean("segkit", "augment", b.augment);
  b.weights.gdl = r.number("segkit", "w_gdl", b.weights.gdl);
  b.weights.bal = r.number("segkit", "w_bal", b.weights.bal);
  b.weights.surface = r.number("segkit", "w_surf", b.weights.surface);
  b.weights.bal_beta = r.number("segkit", "bal_beta", b.weights.bal_beta);
  b.weights.grl_scale = r.number("segkit", "grl_scale", b.weights.grl_scale);
  b.grl_ramp_steps = r.small_int("segkit", "grl_ramp_steps", b.grl_ramp_steps);
  b.balance_domains = r.boolean("segkit", "balance_domains", b.balance_domains);
  b.segmenter.base_width = r.small_int("segkit", "base_width", b.segmenter.base_width);
  b.segmenter.down_blocks = r.small_int("segkit", "down_blocks", b.segmenter.down_blocks);
  b.segmenter.up_blocks = b.segmenter.down_blocks - 1;
  b.segmenter.height = d.height;
  b.segmenter.width = d.width;
  b.classifier.hidden = r.small_int("segkit", "classifier_hidden", b.classifier.hidden);
  b.classifier.input_dim = b.segmenter.bottleneck_size();
  {
    auto probe = b;
    probe.mode = SegMode::kRitnet;
    validate(probe);
    validate(b.classifier);
  }

  const auto pca_fit = r.string("evalkit", "pca_fit", "joint");
  if (pca_fit != "joint" && pca_fit != "target") throw ConfigError("evalkit.pca_fit must be \"joint\" or \"target\"");
  cfg.eval.pca_joint = pca_fit == "joint";
  return cfg;
}

}  // namespace eyeadapt
