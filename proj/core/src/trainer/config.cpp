#include "ulrn/trainer/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>

#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"

namespace ulrn::trainer {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kContinuedPretrain: return "continue";
    case Stage::kSFT: return "sft";
    case Stage::kUnlearn: return "unlearn";
  }
  return "pretrain";
}

Stage parse_stage(std::string_view name) {
  if (name == "pretrain") return Stage::kPretrain;
  if (name == "continue") return Stage::kContinuedPretrain;
  if (name == "sft") return Stage::kSFT;
  if (name == "unlearn") return Stage::kUnlearn;
  fail(ErrorKind::kConfig, "unknown stage '" + std::string(name) + "'");
}

std::string_view to_string(Schedule s) { return s == Schedule::kCosine ? "cosine" : "fixed"; }

Schedule parse_schedule(std::string_view name) {
  if (name == "cosine") return Schedule::kCosine;
  if (name == "fixed") return Schedule::kFixed;
  fail(ErrorKind::kConfig, "unknown schedule '" + std::string(name) + "'");
}

TrainConfig default_config(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  // Peak rates keep the 1e-4 : 5e-5 : 2e-5 : 5e-5 ratios across stages,
  // scaled up 10x for models this small.
  switch (stage) {
    case Stage::kPretrain:
      c.lr = 1e-3;
      c.schedule = Schedule::kCosine;
      c.steps = 2000;
      break;
    case Stage::kContinuedPretrain:
      c.lr = 5e-4;
      c.schedule = Schedule::kFixed;
      c.steps = 1000;
      break;
    case Stage::kSFT:
      c.lr = 2e-4;
      c.schedule = Schedule::kFixed;
      c.steps = 0;
      break;
    case Stage::kUnlearn:
      c.lr = 5e-4;
      c.schedule = Schedule::kFixed;
      c.steps = 0;
      c.forget_token_budget = 20000;
      break;
  }
  return c;
}

void TrainConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  require(positive(lr), ErrorKind::kConfig, "lr must be positive");
  require(batch_size >= 1, ErrorKind::kConfig, "batch_size must be at least 1");
  require(context >= 2, ErrorKind::kConfig, "context must be at least 2");
  require(context <= model.max_context, ErrorKind::kConfig,
          "context " + std::to_string(context) + " exceeds model max_context " +
              std::to_string(model.max_context));
  require(warmup_fraction >= 0.0 && warmup_fraction < 1.0, ErrorKind::kConfig,
          "warmup_fraction must lie in [0, 1)");
  require(min_lr_fraction >= 0.0 && min_lr_fraction <= 1.0, ErrorKind::kConfig,
          "min_lr_fraction must lie in [0, 1]");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 &&
              optimizer.beta2 < 1.0,
          ErrorKind::kConfig, "Adam betas must lie in [0, 1)");
  require(positive(optimizer.eps) && positive(optimizer.grad_clip) &&
              optimizer.weight_decay >= 0.0,
          ErrorKind::kConfig, "adam_eps and grad_clip must be positive, weight_decay >= 0");
  require(divergence_factor > 1.0, ErrorKind::kConfig, "divergence_factor must exceed 1");
  require(positive(init_std), ErrorKind::kConfig, "init_std must be positive");
  weights.validate();
  model.validate();
  if (stage == Stage::kContinuedPretrain || stage == Stage::kUnlearn) {
    require(schedule == Schedule::kFixed, ErrorKind::kConfig,
            std::string(to_string(stage)) + " stage runs at a fixed learning rate");
  }
  switch (stage) {
    case Stage::kSFT:
      require(steps >= 1 || epochs >= 1, ErrorKind::kConfig, "sft needs steps or epochs");
      break;
    case Stage::kUnlearn:
      require(steps >= 1 || forget_token_budget >= 1, ErrorKind::kConfig,
              "unlearn needs steps or forget_token_budget");
      break;
    default:
      require(steps >= 1, ErrorKind::kConfig, "steps must be at least 1");
  }
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(std::string_view key, std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size() && std::isfinite(v), ErrorKind::kConfig,
          "key '" + std::string(key) + "': '" + std::string(s) + "' is not a number");
  return v;
}

std::uint64_t to_u64(std::string_view key, std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::kConfig,
          "key '" + std::string(key) + "': '" + std::string(s) +
              "' is not a non-negative integer");
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

using Setter = std::function<void(TrainConfig&, std::string_view)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
  const char* key;
  Setter set;
  Getter get;
};

template <typename T>
Field size_field(const char* key, T TrainConfig::*member) {
  return {key, [=](TrainConfig& c, std::string_view v) { c.*member = static_cast<T>(to_u64(key, v)); },
          [=](const TrainConfig& c) { return std::to_string(c.*member); }};
}

template <typename T>
Field model_size_field(const char* key, T model::ModelConfig::*member) {
  return {key,
          [=](TrainConfig& c, std::string_view v) { c.model.*member = static_cast<T>(to_u64(key, v)); },
          [=](const TrainConfig& c) { return std::to_string(c.model.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = [] {
    std::vector<Field> f;
    f.push_back({"stage", [](TrainConfig& c, std::string_view v) { c.stage = parse_stage(v); },
                 [](const TrainConfig& c) { return std::string(to_string(c.stage)); }});
    f.push_back({"lr", [](TrainConfig& c, std::string_view v) { c.lr = to_double("lr", v); },
                 [](const TrainConfig& c) { return format_double(c.lr); }});
    f.push_back({"schedule",
                 [](TrainConfig& c, std::string_view v) { c.schedule = parse_schedule(v); },
                 [](const TrainConfig& c) { return std::string(to_string(c.schedule)); }});
    f.push_back(size_field("steps", &TrainConfig::steps));
    f.push_back(size_field("epochs", &TrainConfig::epochs));
    f.push_back(size_field("batch_size", &TrainConfig::batch_size));
    f.push_back(size_field("context", &TrainConfig::context));
    f.push_back(size_field("seed", &TrainConfig::seed));
    auto dbl = [&f](const char* key, double TrainConfig::*m) {
      f.push_back({key, [=](TrainConfig& c, std::string_view v) { c.*m = to_double(key, v); },
                   [=](const TrainConfig& c) { return format_double(c.*m); }});
    };
    dbl("warmup_fraction", &TrainConfig::warmup_fraction);
    dbl("min_lr_fraction", &TrainConfig::min_lr_fraction);
    auto weight = [&f](const char* key, double losses::LossWeights::*m) {
      f.push_back({key, [=](TrainConfig& c, std::string_view v) { c.weights.*m = to_double(key, v); },
                   [=](const TrainConfig& c) { return format_double(c.weights.*m); }});
    };
    weight("w_fgt", &losses::LossWeights::fgt);
    weight("w_rpy", &losses::LossWeights::rpy);
    weight("w_mtn", &losses::LossWeights::mtn);
    f.push_back({"forget_loss",
                 [](TrainConfig& c, std::string_view v) { c.forget_loss = losses::parse_forget_loss(v); },
                 [](const TrainConfig& c) { return std::string(losses::to_string(c.forget_loss)); }});
    f.push_back(size_field("forget_token_budget", &TrainConfig::forget_token_budget));
    auto opt = [&f](const char* key, double OptimizerConfig::*m) {
      f.push_back({key, [=](TrainConfig& c, std::string_view v) { c.optimizer.*m = to_double(key, v); },
                   [=](const TrainConfig& c) { return format_double(c.optimizer.*m); }});
    };
    opt("beta1", &OptimizerConfig::beta1);
    opt("beta2", &OptimizerConfig::beta2);
    opt("adam_eps", &OptimizerConfig::eps);
    opt("weight_decay", &OptimizerConfig::weight_decay);
    opt("grad_clip", &OptimizerConfig::grad_clip);
    dbl("divergence_factor", &TrainConfig::divergence_factor);
    f.push_back(size_field("divergence_window", &TrainConfig::divergence_window));
    f.push_back({"init_std",
                 [](TrainConfig& c, std::string_view v) { c.init_std = static_cast<float>(to_double("init_std", v)); },
                 [](const TrainConfig& c) { return format_double(c.init_std); }});
    f.push_back(model_size_field("vocab_size", &model::ModelConfig::vocab_size));
    f.push_back(model_size_field("hidden_size", &model::ModelConfig::hidden_size));
    f.push_back(model_size_field("ffn_size", &model::ModelConfig::ffn_size));
    f.push_back(model_size_field("n_heads", &model::ModelConfig::n_heads));
    f.push_back(model_size_field("n_layers", &model::ModelConfig::n_layers));
    f.push_back(model_size_field("max_context", &model::ModelConfig::max_context));
    f.push_back({"rope_base",
                 [](TrainConfig& c, std::string_view v) { c.model.rope_base = static_cast<float>(to_double("rope_base", v)); },
                 [](const TrainConfig& c) { return format_double(c.model.rope_base); }});
    f.push_back({"activation",
                 [](TrainConfig& c, std::string_view v) { c.model.activation = model::parse_activation(v); },
                 [](const TrainConfig& c) { return std::string(model::to_string(c.model.activation)); }});
    f.push_back({"norm_eps",
                 [](TrainConfig& c, std::string_view v) { c.model.norm_eps = static_cast<float>(to_double("norm_eps", v)); },
                 [](const TrainConfig& c) { return format_double(c.model.norm_eps); }});
    return f;
  }();
  return kFields;
}

}  // namespace

TrainConfig parse_config(std::string_view text) {
  std::map<std::string, std::string, std::less<>> values;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, ErrorKind::kConfig,
            "line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    require(!key.empty() && !value.empty(), ErrorKind::kConfig,
            "line " + std::to_string(line_no) + ": empty key or value");
    require(values.emplace(key, value).second, ErrorKind::kConfig,
            "line " + std::to_string(line_no) + ": key '" + key + "' repeated");
  }

  const auto stage_it = values.find("stage");
  require(stage_it != values.end(), ErrorKind::kConfig, "config lacks the 'stage' key");
  TrainConfig config = default_config(parse_stage(stage_it->second));
  std::set<std::string, std::less<>> known;
  for (const Field& f : fields()) {
    known.insert(f.key);
    if (auto it = values.find(f.key); it != values.end()) f.set(config, it->second);
  }
  for (const auto& [key, _] : values) {
    require(known.contains(key), ErrorKind::kConfig, "unknown config key '" + key + "'");
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

std::string to_text(const TrainConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

std::string config_hash(const TrainConfig& config) { return sha256_hex(to_text(config)); }

}  // namespace ulrn::trainer
