#include "pona/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pona {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Index parse_index(const std::string& key, const std::string& v) {
  Index out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ValidationError(key + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError(key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt_double(double d) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, end);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <typename Enum>
Enum parse_enum(const std::string& key, const std::string& v, const std::vector<std::pair<std::string, Enum>>& table) {
  std::string options;
  for (const auto& [name, e] : table) {
    if (name == v) return e;
    options += (options.empty() ? "" : ", ") + name;
  }
  throw ValidationError(key + ": unknown value '" + v + "' (expected one of " + options + ")");
}

template <typename Enum>
std::string enum_name(Enum e, const std::vector<std::pair<std::string, Enum>>& table) {
  for (const auto& [name, x] : table)
    if (x == e) return name;
  return "?";
}

const std::vector<std::pair<std::string, FusionPlace>> kFusion = {
    {"head", FusionPlace::head}, {"middle", FusionPlace::middle}, {"tail", FusionPlace::tail}, {"none", FusionPlace::none}};
const std::vector<std::pair<std::string, NormKind>> kNorm = {{"batch", NormKind::batch},
                                                             {"instance", NormKind::instance}};
const std::vector<std::pair<std::string, AttentionSource>> kSource = {{"updated", AttentionSource::updated},
                                                                      {"previous", AttentionSource::previous}};
const std::vector<std::pair<std::string, ExtractorKind>> kExtractor = {{"random_conv", ExtractorKind::random_conv},
                                                                       {"identity", ExtractorKind::identity}};

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
};

#define PONA_INDEX_FIELD(expr) \
  Field { [](const ExperimentConfig& c) { return std::to_string(c.expr); }, \
          [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.expr = parse_index(k, v); } }
#define PONA_DOUBLE_FIELD(expr) \
  Field { [](const ExperimentConfig& c) { return fmt_double(c.expr); }, \
          [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.expr = parse_double(k, v); } }
#define PONA_BOOL_FIELD(expr) \
  Field { [](const ExperimentConfig& c) { return fmt_bool(c.expr); }, \
          [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.expr = parse_bool(k, v); } }
#define PONA_ENUM_FIELD(expr, table) \
  Field { [](const ExperimentConfig& c) { return enum_name(c.expr, table); }, \
          [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.expr = parse_enum(k, v, table); } }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"generator.num_blocks", PONA_INDEX_FIELD(generator.num_blocks)},
      {"generator.base_channels", PONA_INDEX_FIELD(generator.base_channels)},
      {"generator.norm", PONA_ENUM_FIELD(generator.norm, kNorm)},
      {"generator.fusion", PONA_ENUM_FIELD(generator.fusion, kFusion)},
      {"generator.use_self_attention", PONA_BOOL_FIELD(generator.use_self_attention)},
      {"generator.use_cross_modal", PONA_BOOL_FIELD(generator.use_cross_modal)},
      {"generator.attention_reduction", PONA_INDEX_FIELD(generator.attention_reduction)},
      {"generator.attention_source", PONA_ENUM_FIELD(generator.attention_source, kSource)},
      {"generator.image_height", PONA_INDEX_FIELD(generator.image_size.height)},
      {"generator.image_width", PONA_INDEX_FIELD(generator.image_size.width)},
      {"discriminator.num_residual_blocks", PONA_INDEX_FIELD(discriminator.num_residual_blocks)},
      {"discriminator.base_channels", PONA_INDEX_FIELD(discriminator.base_channels)},
      {"discriminator.leaky_slope", PONA_DOUBLE_FIELD(discriminator.leaky_slope)},
      {"discriminator.norm", PONA_ENUM_FIELD(discriminator.norm, kNorm)},
      {"discriminator.attention_reduction", PONA_INDEX_FIELD(discriminator.attention_reduction)},
      {"discriminator.attention_after", PONA_INDEX_FIELD(discriminator.attention_after)},
      {"training.iterations", PONA_INDEX_FIELD(training.iterations)},
      {"training.batch_size", PONA_INDEX_FIELD(training.batch_size)},
      {"training.learning_rate", PONA_DOUBLE_FIELD(training.learning_rate)},
      {"training.beta1", PONA_DOUBLE_FIELD(training.beta1)},
      {"training.beta2", PONA_DOUBLE_FIELD(training.beta2)},
      {"training.lambda_adversarial", PONA_DOUBLE_FIELD(training.weights.adversarial)},
      {"training.lambda_l1", PONA_DOUBLE_FIELD(training.weights.l1)},
      {"training.lambda_perceptual", PONA_DOUBLE_FIELD(training.weights.perceptual)},
      {"training.seed",
       Field{[](const ExperimentConfig& c) { return std::to_string(c.training.seed); },
             [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.training.seed = parse_u64(k, v); }}},
      {"training.checkpoint_interval", PONA_INDEX_FIELD(training.checkpoint_interval)},
      {"training.sigma", PONA_DOUBLE_FIELD(training.sigma)},
      {"training.extractor", PONA_ENUM_FIELD(training.extractor, kExtractor)},
      {"training.extractor_channels", PONA_INDEX_FIELD(training.extractor_channels)},
      {"data.resize", PONA_BOOL_FIELD(data.resize)},
  };
  return table;
}

#undef PONA_INDEX_FIELD
#undef PONA_DOUBLE_FIELD
#undef PONA_BOOL_FIELD
#undef PONA_ENUM_FIELD

const Field& field(const std::string& key) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ValidationError(key + ": unknown configuration key");
  return it->second;
}

std::pair<std::string, std::string> split_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ValidationError("expected 'key = value', got '" + trim(line) + "'");
  return {trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
}

std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  return trim(hash == std::string::npos ? line : line.substr(0, hash));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open configuration file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void TrainingConfig::validate() const {
  if (iterations < 1) throw ValidationError("training.iterations: must be >= 1");
  if (batch_size < 1) throw ValidationError("training.batch_size: must be >= 1");
  if (!(learning_rate > 0)) throw ValidationError("training.learning_rate: must be positive");
  if (!(beta1 >= 0 && beta1 < 1)) throw ValidationError("training.beta1: must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ValidationError("training.beta2: must lie in [0, 1)");
  weights.validate();
  if (checkpoint_interval < 1) throw ValidationError("training.checkpoint_interval: must be >= 1");
  if (!(sigma > 0)) throw ValidationError("training.sigma: must be positive");
  if (extractor_channels < 1) throw ValidationError("training.extractor_channels: must be >= 1");
}

void ExperimentConfig::validate() const {
  generator.validate();
  discriminator.validate();
  training.validate();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, key, value);
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return field(key).get(cfg); }

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  auto [k, v] = split_assignment(assignment);
  set_config_value(cfg, k, v);
}

ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base, const std::string& source) {
  ExperimentConfig cfg = base;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const std::string body = strip_comment(line);
    if (body.empty()) continue;
    try {
      apply_override(cfg, body);
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base) {
  return parse_config(read_file(path), base, path);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<AblationVariant> parse_ablation_matrix(const std::string& text, const ExperimentConfig& base,
                                                   const std::string& source) {
  ExperimentConfig shared = base;
  std::vector<std::pair<std::string, std::vector<std::pair<int, std::string>>>> sections;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const std::string body = strip_comment(line);
    if (body.empty()) continue;
    try {
      if (body.front() == '[') {
        if (body.back() != ']' || body.size() < 3) throw ValidationError("malformed section header '" + body + "'");
        const std::string name = trim(body.substr(1, body.size() - 2));
        for (const auto& s : sections)
          if (s.first == name) throw ValidationError("duplicate variant '" + name + "'");
        sections.push_back({name, {}});
      } else if (sections.empty()) {
        apply_override(shared, body);
      } else {
        split_assignment(body);
        sections.back().second.push_back({n, body});
      }
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  std::vector<AblationVariant> variants;
  for (const auto& [name, lines] : sections) {
    AblationVariant v{name, shared};
    for (const auto& [n, body] : lines) {
      try {
        apply_override(v.config, body);
      } catch (const ValidationError& e) {
        throw ValidationError(source + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    try {
      v.config.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(source + ": variant '" + name + "': " + e.what());
    }
    variants.push_back(std::move(v));
  }
  return variants;
}

std::vector<AblationVariant> load_ablation_matrix(const std::string& path, const ExperimentConfig& base) {
  return parse_ablation_matrix(read_file(path), base, path);
}

bool is_reference_architecture(const GeneratorConfig& g) {
  return g.fusion == FusionPlace::head && g.use_self_attention && g.use_cross_modal &&
         g.attention_source == AttentionSource::updated;
}

std::string to_string(FusionPlace f) { return enum_name(f, kFusion); }
std::string to_string(NormKind n) { return enum_name(n, kNorm); }

}  // namespace pona
