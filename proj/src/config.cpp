#include "gastro/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "gastro/error.hpp"

namespace gastro {

namespace {

std::string Located(const std::string& origin, int line, const std::string& message) {
  return origin + ":" + std::to_string(line) + ": " + message;
}

std::string Trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool IsBareKey(const std::string& s) {
  if (s.empty()) return false;
  for (const char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

// Strips a trailing comment that is not inside a string.
std::string StripComment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string && c == '\\') {
      ++i;
    } else if (c == '"') {
      in_string = !in_string;
    } else if (c == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

ConfigValue ParseValue(const std::string& raw, const std::string& origin, int line) {
  const std::string v = Trim(raw);
  if (v.empty()) throw Error(ErrorKind::kConfig, Located(origin, line, "missing value"));
  if (v.front() == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < v.size() && v[i] != '"'; ++i) {
      if (v[i] == '\\') {
        if (i + 1 >= v.size()) break;
        const char e = v[++i];
        if (e == 'n') out += '\n';
        else if (e == 't') out += '\t';
        else if (e == '"' || e == '\\') out += e;
        else throw Error(ErrorKind::kConfig, Located(origin, line, "unknown escape \\" + std::string(1, e)));
      } else {
        out += v[i];
      }
    }
    if (i >= v.size()) throw Error(ErrorKind::kConfig, Located(origin, line, "unterminated string"));
    if (i + 1 != v.size()) {
      throw Error(ErrorKind::kConfig, Located(origin, line, "unexpected text after string"));
    }
    return out;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::string digits;
  for (const char c : v) {
    if (c != '_') digits += c;
  }
  const char* first = digits.data();
  const char* last = digits.data() + digits.size();
  if (*first == '+') ++first;
  const bool floating = digits.find_first_of(".eE") != std::string::npos ||
                        digits == "inf" || digits == "nan";
  if (!floating) {
    std::int64_t i = 0;
    const auto [p, ec] = std::from_chars(first, last, i);
    if (ec == std::errc() && p == last) return i;
  } else {
    double d = 0.0;
    const auto [p, ec] = std::from_chars(first, last, d);
    if (ec == std::errc() && p == last) return d;
  }
  throw Error(ErrorKind::kConfig, Located(origin, line, "cannot parse value '" + v + "'"));
}

struct Binding {
  std::function<void(PipelineConfig&, const ConfigValue&)> assign;
  const char* type;
};

template <typename T>
Binding Bind(T PipelineConfig::*field);

template <>
Binding Bind(std::string PipelineConfig::*field) {
  return {[field](PipelineConfig& c, const ConfigValue& v) {
            if (!std::holds_alternative<std::string>(v)) throw std::bad_variant_access();
            c.*field = std::get<std::string>(v);
          },
          "string"};
}

template <>
Binding Bind(double PipelineConfig::*field) {
  return {[field](PipelineConfig& c, const ConfigValue& v) {
            if (std::holds_alternative<double>(v)) c.*field = std::get<double>(v);
            else if (std::holds_alternative<std::int64_t>(v))
              c.*field = static_cast<double>(std::get<std::int64_t>(v));
            else throw std::bad_variant_access();
          },
          "number"};
}

template <>
Binding Bind(std::int64_t PipelineConfig::*field) {
  return {[field](PipelineConfig& c, const ConfigValue& v) {
            if (!std::holds_alternative<std::int64_t>(v)) throw std::bad_variant_access();
            c.*field = std::get<std::int64_t>(v);
          },
          "integer"};
}

template <>
Binding Bind(bool PipelineConfig::*field) {
  return {[field](PipelineConfig& c, const ConfigValue& v) {
            if (!std::holds_alternative<bool>(v)) throw std::bad_variant_access();
            c.*field = std::get<bool>(v);
          },
          "boolean"};
}

const std::map<std::string, Binding>& Bindings() {
  static const std::map<std::string, Binding> bindings = {
      {"input.frames", Bind(&PipelineConfig::frames)},
      {"input.intrinsics", Bind(&PipelineConfig::intrinsics)},
      {"input.range_begin", Bind(&PipelineConfig::range_begin)},
      {"input.range_end", Bind(&PipelineConfig::range_end)},
      {"preprocess.channel", Bind(&PipelineConfig::channel)},
      {"preprocess.dedup_tau", Bind(&PipelineConfig::dedup_tau)},
      {"features.max_features", Bind(&PipelineConfig::max_features)},
      {"features.ratio_threshold", Bind(&PipelineConfig::ratio_threshold)},
      {"sfm.max_reproj", Bind(&PipelineConfig::max_reproj)},
      {"sfm.ransac_seed", Bind(&PipelineConfig::ransac_seed)},
      {"sfm.min_triangulation_angle", Bind(&PipelineConfig::min_triangulation_angle)},
      {"mesh.n", Bind(&PipelineConfig::filter_n)},
      {"mesh.neighbor_fraction", Bind(&PipelineConfig::neighbor_fraction)},
      {"mesh.normal_fraction", Bind(&PipelineConfig::normal_fraction)},
      {"mesh.sigma_multiplier", Bind(&PipelineConfig::sigma_multiplier)},
      {"mesh.poisson_depth", Bind(&PipelineConfig::poisson_depth)},
      {"mesh.screening", Bind(&PipelineConfig::screening)},
      {"texture.angle_exponent", Bind(&PipelineConfig::angle_exponent)},
      {"texture.distance_exponent", Bind(&PipelineConfig::distance_exponent)},
      {"texture.occlusion", Bind(&PipelineConfig::occlusion)},
      {"texture.texel_budget", Bind(&PipelineConfig::texel_budget)},
      {"texture.texels_per_pixel", Bind(&PipelineConfig::texels_per_pixel)},
      {"texture.max_chart_side", Bind(&PipelineConfig::max_chart_side)},
      {"export.frame_max_side", Bind(&PipelineConfig::frame_max_side)},
      {"export.jpeg_quality", Bind(&PipelineConfig::jpeg_quality)},
      {"output.out", Bind(&PipelineConfig::out)},
  };
  return bindings;
}

void Require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::kConfig, message);
}

}  // namespace

std::vector<ConfigEntry> ParseConfigText(const std::string& text, const std::string& origin) {
  std::vector<ConfigEntry> entries;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = Trim(StripComment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw Error(ErrorKind::kConfig, Located(origin, line, "malformed section header"));
      section = Trim(s.substr(1, s.size() - 2));
      if (!IsBareKey(section)) {
        throw Error(ErrorKind::kConfig, Located(origin, line, "invalid section name '" + section + "'"));
      }
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kConfig, Located(origin, line, "expected key = value"));
    }
    const std::string name = Trim(s.substr(0, eq));
    if (!IsBareKey(name)) {
      throw Error(ErrorKind::kConfig, Located(origin, line, "invalid key '" + name + "'"));
    }
    const std::string key = section.empty() ? name : section + "." + name;
    if (!seen.insert(key).second) {
      throw Error(ErrorKind::kConfig, Located(origin, line, "duplicate key '" + key + "'"));
    }
    entries.push_back({key, ParseValue(s.substr(eq + 1), origin, line), line});
  }
  return entries;
}

void ApplyConfigEntry(PipelineConfig& config, const ConfigEntry& entry, const std::string& origin) {
  const auto& bindings = Bindings();
  const auto it = bindings.find(entry.key);
  if (it == bindings.end()) {
    throw Error(ErrorKind::kConfig, Located(origin, entry.line, "unknown key '" + entry.key + "'"));
  }
  try {
    it->second.assign(config, entry.value);
  } catch (const std::bad_variant_access&) {
    throw Error(ErrorKind::kConfig, Located(origin, entry.line, "key '" + entry.key +
                                                                    "' expects a " + it->second.type));
  }
}

PipelineConfig LoadConfig(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides) {
  PipelineConfig config;
  if (!file.empty()) {
    std::ifstream in(file);
    GASTRO_CHECK(in.good(), ErrorKind::kConfig, "cannot read config " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& e : ParseConfigText(ss.str(), file.string())) {
      ApplyConfigEntry(config, e, file.string());
    }
  }
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    const std::string origin = "--set";
    const auto parsed = ParseConfigText(overrides[i], origin);
    if (parsed.size() != 1) {
      throw Error(ErrorKind::kConfig, "--set expects key=value, got '" + overrides[i] + "'");
    }
    ApplyConfigEntry(config, parsed.front(), origin);
  }
  config.Validate();
  return config;
}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> keys;
  for (const auto& [k, b] : Bindings()) keys.push_back(k);
  return keys;
}

void PipelineConfig::Validate() const {
  Require(channel == "red" || channel == "green" || channel == "blue",
          "preprocess.channel must be red, green or blue");
  Require(range_begin >= 0, "input.range_begin must be >= 0");
  Require(range_end == -1 || range_end >= range_begin,
          "input.range_end must be -1 or >= input.range_begin");
  Require(dedup_tau >= 0.0 && dedup_tau <= 255.0, "preprocess.dedup_tau must lie in [0, 255]");
  Require(max_features >= 0 && max_features <= 100000,
          "features.max_features must lie in [0, 100000]");
  Require(ratio_threshold > 0.0 && ratio_threshold <= 1.0,
          "features.ratio_threshold must lie in (0, 1]");
  Require(max_reproj > 0.0 && max_reproj <= 100.0, "sfm.max_reproj must lie in (0, 100]");
  Require(ransac_seed >= 0, "sfm.ransac_seed must be >= 0");
  Require(min_triangulation_angle >= 0.0 && min_triangulation_angle < 90.0,
          "sfm.min_triangulation_angle must lie in [0, 90)");
  Require(filter_n >= 10, "mesh.n must be >= 10");
  Require(neighbor_fraction > 0.0 && neighbor_fraction < 1.0,
          "mesh.neighbor_fraction must lie in (0, 1)");
  Require(normal_fraction > 0.0 && normal_fraction < 1.0,
          "mesh.normal_fraction must lie in (0, 1)");
  Require(sigma_multiplier > 0.0, "mesh.sigma_multiplier must be > 0");
  Require(poisson_depth >= 5 && poisson_depth <= 8, "mesh.poisson_depth must lie in [5, 8]");
  Require(screening >= 0.0, "mesh.screening must be >= 0");
  Require(angle_exponent >= 0.0, "texture.angle_exponent must be >= 0");
  Require(distance_exponent >= 0.0, "texture.distance_exponent must be >= 0");
  Require(texel_budget >= 64 && texel_budget <= 65536,
          "texture.texel_budget must lie in [64, 65536]");
  Require(texels_per_pixel > 0.0 && texels_per_pixel <= 8.0,
          "texture.texels_per_pixel must lie in (0, 8]");
  Require(max_chart_side >= 4 && max_chart_side <= 4096,
          "texture.max_chart_side must lie in [4, 4096]");
  Require(frame_max_side >= 16 && frame_max_side <= 8192,
          "export.frame_max_side must lie in [16, 8192]");
  Require(jpeg_quality >= 1 && jpeg_quality <= 100, "export.jpeg_quality must lie in [1, 100]");
}

nlohmann::json PipelineConfig::ToJson() const {
  nlohmann::json j;
  j["input"] = {{"frames", frames},
                {"intrinsics", intrinsics},
                {"range_begin", range_begin},
                {"range_end", range_end}};
  j["preprocess"] = {{"channel", channel}, {"dedup_tau", dedup_tau}};
  j["features"] = {{"max_features", max_features}, {"ratio_threshold", ratio_threshold}};
  j["sfm"] = {{"max_reproj", max_reproj},
              {"ransac_seed", ransac_seed},
              {"min_triangulation_angle", min_triangulation_angle}};
  j["mesh"] = {{"n", filter_n},
               {"neighbor_fraction", neighbor_fraction},
               {"normal_fraction", normal_fraction},
               {"sigma_multiplier", sigma_multiplier},
               {"poisson_depth", poisson_depth},
               {"screening", screening}};
  j["texture"] = {{"angle_exponent", angle_exponent},
                  {"distance_exponent", distance_exponent},
                  {"occlusion", occlusion},
                  {"texel_budget", texel_budget},
                  {"texels_per_pixel", texels_per_pixel},
                  {"max_chart_side", max_chart_side}};
  j["export"] = {{"frame_max_side", frame_max_side}, {"jpeg_quality", jpeg_quality}};
  return j;
}

}  // namespace gastro
