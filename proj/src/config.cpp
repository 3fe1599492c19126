#include "convret/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace convret {

namespace {

struct Preset {
  std::string_view name;
  std::uint32_t dim;
  std::uint32_t codebook_size;
};

// d * |C| - 128 gives the named final dimension.
constexpr Preset kPresets[] = {
    {"D512", 32, 20}, {"D1024", 64, 18}, {"D2048", 64, 34}, {"D4096", 64, 66}, {"D8064", 128, 64},
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  // from_chars for double is missing on older libstdc++.
  std::string s(value);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw ConfigError("invalid value '" + s + "' for " + std::string(key));
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  std::string v(value);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("invalid boolean '" + std::string(value) + "' for " + std::string(key));
}

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::kNone: return "none";
    case MaskKind::kSift: return "sift";
    case MaskKind::kSum: return "sum";
    case MaskKind::kMax: return "max";
  }
  return "?";
}

std::string to_string(EmbedKind k) {
  switch (k) {
    case EmbedKind::kTemb: return "temb";
    case EmbedKind::kVlad: return "vlad";
    case EmbedKind::kFv: return "fv";
  }
  return "?";
}

std::string to_string(AggregationMode m) {
  switch (m) {
    case AggregationMode::kSum: return "sum";
    case AggregationMode::kAvg: return "avg";
    case AggregationMode::kMax: return "max";
    case AggregationMode::kDemocratic: return "democratic";
  }
  return "?";
}

MaskKind parse_mask_kind(std::string_view s) {
  if (s == "none") return MaskKind::kNone;
  if (s == "sift") return MaskKind::kSift;
  if (s == "sum") return MaskKind::kSum;
  if (s == "max") return MaskKind::kMax;
  throw ConfigError("unknown mask '" + std::string(s) + "' (none|sift|sum|max)");
}

EmbedKind parse_embed_kind(std::string_view s) {
  if (s == "temb") return EmbedKind::kTemb;
  if (s == "vlad") return EmbedKind::kVlad;
  if (s == "fv") return EmbedKind::kFv;
  throw ConfigError("unknown embedding '" + std::string(s) + "' (temb|vlad|fv)");
}

AggregationMode parse_aggregation_mode(std::string_view s) {
  if (s == "sum") return AggregationMode::kSum;
  if (s == "avg") return AggregationMode::kAvg;
  if (s == "max") return AggregationMode::kMax;
  if (s == "democratic") return AggregationMode::kDemocratic;
  throw ConfigError("unknown aggregation '" + std::string(s) + "' (sum|avg|max|democratic)");
}

std::uint64_t PipelineConfig::embedding_dim() const {
  const std::uint64_t base = std::uint64_t{dim} * codebook_size;
  switch (embed) {
    case EmbedKind::kTemb: return base >= drop ? base - drop : 0;
    case EmbedKind::kVlad: return base;
    case EmbedKind::kFv: return 2 * base;
  }
  return 0;
}

std::uint64_t PipelineConfig::final_dim() const {
  if (rn.enabled && rn.dim != 0) return rn.dim;
  return embedding_dim();
}

void PipelineConfig::validate() const {
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (codebook_size < 1) throw ConfigError("codebook-size must be >= 1");
  if (embed == EmbedKind::kTemb) {
    if (std::uint64_t{drop} >= std::uint64_t{dim} * codebook_size)
      throw ConfigError("temb: drop (" + std::to_string(drop) + ") must be < dim * codebook-size (" +
                        std::to_string(std::uint64_t{dim} * codebook_size) + ")");
  } else if (drop != 0) {
    throw ConfigError("drop applies to temb only; set drop = 0 for " + to_string(embed));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
  if (agg.sinkhorn_iterations < 1) throw ConfigError("sinkhorn-iterations must be >= 1");
  if (!(agg.sinkhorn_exponent > 0.0 && agg.sinkhorn_exponent <= 1.0))
    throw ConfigError("sinkhorn-exponent must be in (0, 1]");
  if (rn.enabled && rn.dim > embedding_dim())
    throw ConfigError("rn-dim (" + std::to_string(rn.dim) + ") exceeds embedding dim (" +
                      std::to_string(embedding_dim()) + ")");
  if (!(rn.epsilon >= 0.0)) throw ConfigError("rn epsilon must be >= 0");
  if (bits > final_dim())
    throw ConfigError("bits (" + std::to_string(bits) + ") exceed descriptor dim (" + std::to_string(final_dim()) +
                      ")");
  if (bits > 0 && itq_iterations < 1) throw ConfigError("itq-iterations must be >= 1");
  for (const auto& layer : layers)
    if (layer.empty() || layer.find_first_of("/\\ ,") != std::string::npos)
      throw ConfigError("invalid layer suffix '" + layer + "'");
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : kPresets) out.emplace_back(p.name);
  return out;
}

PipelineConfig apply_preset(PipelineConfig base, std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) {
      base.embed = EmbedKind::kTemb;
      base.dim = p.dim;
      base.codebook_size = p.codebook_size;
      base.drop = 128;
      return base;
    }
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "mask") {
    cfg.mask = parse_mask_kind(value);
  } else if (key == "embed") {
    cfg.embed = parse_embed_kind(value);
  } else if (key == "agg") {
    cfg.agg.mode = parse_aggregation_mode(value);
  } else if (key == "alpha") {
    cfg.alpha = parse_real(key, value);
  } else if (key == "dim") {
    cfg.dim = parse_number<std::uint32_t>(key, value);
  } else if (key == "codebook-size") {
    cfg.codebook_size = parse_number<std::uint32_t>(key, value);
  } else if (key == "drop") {
    cfg.drop = parse_number<std::uint32_t>(key, value);
  } else if (key == "bits") {
    cfg.bits = parse_number<std::uint32_t>(key, value);
  } else if (key == "whiten") {
    cfg.rn.whiten = parse_bool(key, value);
  } else if (key == "rn") {
    cfg.rn.enabled = parse_bool(key, value);
  } else if (key == "rn-dim") {
    cfg.rn.dim = parse_number<std::uint32_t>(key, value);
  } else if (key == "rn-epsilon") {
    cfg.rn.epsilon = parse_real(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "preset") {
    cfg = apply_preset(cfg, value);
  } else if (key == "layers") {
    cfg.layers.clear();
    std::string_view rest = value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto item = trim(rest.substr(0, comma));
      if (!item.empty()) cfg.layers.emplace_back(item);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  } else if (key == "sinkhorn-iterations") {
    cfg.agg.sinkhorn_iterations = parse_number<int>(key, value);
  } else if (key == "sinkhorn-exponent") {
    cfg.agg.sinkhorn_exponent = parse_real(key, value);
  } else if (key == "clamp-gram") {
    cfg.agg.clamp_negative_gram = parse_bool(key, value);
  } else if (key == "itq-iterations") {
    cfg.itq_iterations = parse_number<int>(key, value);
  } else if (key == "threads") {
    cfg.threads = parse_number<unsigned>(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      apply_setting(base, trim(view.substr(0, eq)), view.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

std::string to_key_values(const PipelineConfig& cfg) {
  std::ostringstream os;
  std::string layers;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) layers += (i ? "," : "") + cfg.layers[i];
  os << "mask = " << to_string(cfg.mask) << '\n'
     << "layers = " << layers << '\n'
     << "embed = " << to_string(cfg.embed) << '\n'
     << "dim = " << cfg.dim << '\n'
     << "codebook-size = " << cfg.codebook_size << '\n'
     << "drop = " << cfg.drop << '\n'
     << "agg = " << to_string(cfg.agg.mode) << '\n'
     << "sinkhorn-iterations = " << cfg.agg.sinkhorn_iterations << '\n'
     << "sinkhorn-exponent = " << format_real(cfg.agg.sinkhorn_exponent) << '\n'
     << "clamp-gram = " << (cfg.agg.clamp_negative_gram ? "on" : "off") << '\n'
     << "alpha = " << format_real(cfg.alpha) << '\n'
     << "rn = " << (cfg.rn.enabled ? "on" : "off") << '\n'
     << "whiten = " << (cfg.rn.whiten ? "on" : "off") << '\n'
     << "rn-dim = " << cfg.rn.dim << '\n'
     << "rn-epsilon = " << format_real(cfg.rn.epsilon) << '\n'
     << "bits = " << cfg.bits << '\n'
     << "itq-iterations = " << cfg.itq_iterations << '\n'
     << "seed = " << cfg.seed << '\n';
  return os.str();
}

}  // namespace convret
