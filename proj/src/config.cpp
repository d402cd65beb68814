#include "dafnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "dafnet/errors.hpp"

namespace dafnet::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("invalid value '" + value + "' for key '" + key + "' (expected " + expected + ")");
}

template <class T>
struct Codec;

template <class T>
  requires std::is_integral_v<T> && (!std::is_same_v<T, bool>)
struct Codec<T> {
  static std::string write(T v) { return std::to_string(v); }
  static T read(const std::string& key, const std::string& s) {
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) bad_value(key, s, "an integer");
    return v;
  }
};

template <>
struct Codec<double> {
  static std::string write(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  }
  static double read(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
      bad_value(key, s, "a finite number");
    }
    return v;
  }
};

template <>
struct Codec<bool> {
  static std::string write(bool v) { return v ? "true" : "false"; }
  static bool read(const std::string& key, const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    bad_value(key, s, "true|false");
  }
};

template <>
struct Codec<std::string> {
  static std::string write(const std::string& v) { return v; }
  static std::string read(const std::string&, const std::string& s) { return s; }
};

template <class T, std::size_t N>
struct Codec<std::array<T, N>> {
  static std::string write(const std::array<T, N>& v) {
    std::string out;
    for (std::size_t i = 0; i < N; ++i) out += (i ? "," : "") + Codec<T>::write(v[i]);
    return out;
  }
  static std::array<T, N> read(const std::string& key, const std::string& s) {
    std::array<T, N> out{};
    std::stringstream ss(s);
    std::string item;
    std::size_t i = 0;
    while (std::getline(ss, item, ',')) {
      if (i == N) bad_value(key, s, (std::to_string(N) + " comma-separated values").c_str());
      out[i++] = Codec<T>::read(key, trim(item));
    }
    if (i != N) bad_value(key, s, (std::to_string(N) + " comma-separated values").c_str());
    return out;
  }
};

struct Field {
  std::string key;
  bool architecture;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Section, class T>
Field field(std::string key, Section RunConfig::*section, T Section::*member, bool architecture = false) {
  return Field{key, architecture,
               [section, member](const RunConfig& c) { return Codec<T>::write(c.*section.*member); },
               [section, member, key](RunConfig& c, const std::string& v) {
                 c.*section.*member = Codec<T>::read(key, v);
               }};
}

template <class T>
Field top_field(std::string key, T RunConfig::*member) {
  return Field{key, false, [member](const RunConfig& c) { return Codec<T>::write(c.*member); },
               [member, key](RunConfig& c, const std::string& v) { c.*member = Codec<T>::read(key, v); }};
}

const std::vector<Field>& fields() {
  using M = ModelSection;
  using D = DataSection;
  using O = OptimSection;
  static const std::vector<Field> table = {
      field("model.rgb_backbone", &RunConfig::model, &M::rgb_backbone, true),
      field("model.depth_backbone", &RunConfig::model, &M::depth_backbone, true),
      field("model.stage_channels", &RunConfig::model, &M::stage_channels, true),
      field("model.blocks_per_stage", &RunConfig::model, &M::blocks_per_stage, true),
      field("model.res2net_scale", &RunConfig::model, &M::res2net_scale, true),
      field("model.patch_sizes", &RunConfig::model, &M::patch_sizes, true),
      field("model.embed_dim", &RunConfig::model, &M::embed_dim, true),
      field("model.vit_depth", &RunConfig::model, &M::vit_depth, true),
      field("model.vit_heads", &RunConfig::model, &M::vit_heads, true),
      field("model.mlp_ratio", &RunConfig::model, &M::mlp_ratio, true),
      field("model.ca_reduction", &RunConfig::model, &M::ca_reduction, true),
      field("model.sa_kernel", &RunConfig::model, &M::sa_kernel, true),
      field("model.daw_reduction", &RunConfig::model, &M::daw_reduction, true),
      field("model.dcf_mode", &RunConfig::model, &M::dcf_mode, true),
      field("model.daw_source_stage", &RunConfig::model, &M::daw_source_stage, true),
      field("model.encoder_mode", &RunConfig::model, &M::encoder_mode, true),
      field("model.decoder_width", &RunConfig::model, &M::decoder_width, true),
      field("model.eca_kernel", &RunConfig::model, &M::eca_kernel, true),
      field("model.use_rmfe", &RunConfig::model, &M::use_rmfe, true),
      field("model.use_geca", &RunConfig::model, &M::use_geca, true),
      field("model.use_fam", &RunConfig::model, &M::use_fam, true),
      field("model.use_rgb_residual", &RunConfig::model, &M::use_rgb_residual, true),
      field("data.train_root", &RunConfig::data, &D::train_root),
      field("data.train_split", &RunConfig::data, &D::train_split),
      field("data.eval_root", &RunConfig::data, &D::eval_root),
      field("data.eval_split", &RunConfig::data, &D::eval_split),
      field("data.input_size", &RunConfig::data, &D::input_size, true),
      field("data.augment", &RunConfig::data, &D::augment),
      field("data.flip_prob", &RunConfig::data, &D::flip_prob),
      field("data.crop_prob", &RunConfig::data, &D::crop_prob),
      field("data.crop_max", &RunConfig::data, &D::crop_max),
      field("data.max_samples", &RunConfig::data, &D::max_samples),
      field("optim.lr", &RunConfig::optim, &O::lr),
      field("optim.batch_size", &RunConfig::optim, &O::batch_size),
      field("optim.epochs", &RunConfig::optim, &O::epochs),
      field("optim.max_steps", &RunConfig::optim, &O::max_steps),
      field("optim.lr_decay_every", &RunConfig::optim, &O::lr_decay_every),
      field("optim.lr_decay_factor", &RunConfig::optim, &O::lr_decay_factor),
      field("optim.weight_decay", &RunConfig::optim, &O::weight_decay),
      field("optim.beta1", &RunConfig::optim, &O::beta1),
      field("optim.beta2", &RunConfig::optim, &O::beta2),
      field("optim.adam_eps", &RunConfig::optim, &O::adam_eps),
      field("optim.lambda", &RunConfig::optim, &O::lambda),
      field("eval.e_variant", &RunConfig::eval, &EvalSection::e_variant),
      top_field("seed", &RunConfig::seed),
      top_field("output_dir", &RunConfig::output_dir),
  };
  return table;
}

const Field& find(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  to_model_config(*this).validate();
  if (data.flip_prob < 0 || data.flip_prob > 1) throw ConfigError("data.flip_prob must be in [0,1]");
  if (data.crop_prob < 0 || data.crop_prob > 1) throw ConfigError("data.crop_prob must be in [0,1]");
  if (data.crop_max < 0 || data.crop_max >= 0.5) throw ConfigError("data.crop_max must be in [0,0.5)");
  if (!(optim.lr > 0)) throw ConfigError("optim.lr must be positive");
  if (optim.batch_size < 1) throw ConfigError("optim.batch_size must be at least 1");
  if (optim.epochs < 1) throw ConfigError("optim.epochs must be at least 1");
  if (optim.max_steps < 0) throw ConfigError("optim.max_steps must be nonnegative");
  if (optim.lr_decay_every < 1) throw ConfigError("optim.lr_decay_every must be at least 1");
  if (optim.lr_decay_factor <= 0) throw ConfigError("optim.lr_decay_factor must be positive");
  if (optim.weight_decay < 0) throw ConfigError("optim.weight_decay must be nonnegative");
  if (optim.beta1 < 0 || optim.beta1 >= 1 || optim.beta2 < 0 || optim.beta2 >= 1) {
    throw ConfigError("optim.beta1/beta2 must be in [0,1)");
  }
  if (!(optim.adam_eps > 0)) throw ConfigError("optim.adam_eps must be positive");
  to_loss_weights(*this).validate();
  metrics::parse_e_variant(eval.e_variant);
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::string serialize(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

void set_value(RunConfig& config, const std::string& key, const std::string& value) {
  find(key).set(config, trim(value));
}

std::string get_value(const RunConfig& config, const std::string& key) { return find(key).get(config); }

RunConfig parse(const std::string& text) {
  RunConfig config;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected 'key = value', got '" + t + "'");
    }
    set_value(config, trim(t.substr(0, eq)), t.substr(eq + 1));
  }
  return config;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig config = parse(buf.str());
  config.validate();
  return config;
}

void save(const RunConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  out << serialize(config);
}

std::string first_architecture_difference(const RunConfig& a, const RunConfig& b) {
  for (const auto& f : fields()) {
    if (f.architecture && f.get(a) != f.get(b)) return f.key;
  }
  return "";
}

ModelConfig to_model_config(const RunConfig& c) {
  const auto& m = c.model;
  ModelConfig out;
  auto& e = out.encoder;
  e.input_size = c.data.input_size;
  e.rgb.stage_channels = m.stage_channels;
  e.rgb.blocks_per_stage = m.blocks_per_stage;
  e.rgb.variant = encoder::parse_backbone_variant(m.rgb_backbone);
  e.rgb.scale = m.res2net_scale;
  e.rgb.in_channels = 3;
  e.depth = e.rgb;
  e.depth.variant = encoder::parse_backbone_variant(m.depth_backbone);
  e.depth.in_channels = 1;
  e.fusion.patch_sizes = m.patch_sizes;
  e.fusion.embed_dim = m.embed_dim;
  e.fusion.depth = m.vit_depth;
  e.fusion.heads = m.vit_heads;
  e.fusion.mlp_ratio = m.mlp_ratio;
  e.dcf_mode = dcf::parse_dcf_mode(m.dcf_mode);
  e.daw_source_stage = m.daw_source_stage;
  e.hyper = {m.ca_reduction, m.sa_kernel, m.daw_reduction};
  e.mode = encoder::parse_encoder_mode(m.encoder_mode);
  auto& d = out.decoder;
  d.width = m.decoder_width;
  d.eca_kernel = m.eca_kernel;
  d.use_rmfe = m.use_rmfe;
  d.use_geca = m.use_geca;
  d.use_fam = m.use_fam;
  d.use_rgb_residual = m.use_rgb_residual;
  return out;
}

data::AugmentOptions to_augment_options(const RunConfig& c) {
  return {c.data.augment, c.data.flip_prob, c.data.crop_prob, c.data.crop_max};
}

losses::LossWeights to_loss_weights(const RunConfig& c) { return {c.optim.lambda}; }

metrics::MetricOptions to_metric_options(const RunConfig& c) {
  metrics::MetricOptions o;
  o.e_variant = metrics::parse_e_variant(c.eval.e_variant);
  return o;
}

}  // namespace dafnet::config
