#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mdp/errors.hpp"
#include "mdp/harness.hpp"

namespace mdp::harness {

using nlohmann::json;

namespace {

// Reads known keys from an object and rejects the rest.
class Reader {
 public:
  Reader(const json& object, std::string where) : object_(object), where_(std::move(where)) {
    if (!object_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& target) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      target = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + where_ + "." + key);
    }
  }

 private:
  const json& object_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

void ExperimentConfig::validate() const {
  task.validate();
  if (model.dim < 1) throw ConfigError("model.dim must be positive");
  if (model.label_tokens_per_class < 1) throw ConfigError("model.label_tokens_per_class must be positive");
  if (attack.kinds.empty()) throw ConfigError("attack.kinds is empty");
  if (attack.target < 0 || attack.target >= task.layout.num_classes) throw ConfigError("attack.target out of range");
  if (!(attack.poisoning_rate >= 0.0 && attack.poisoning_rate <= 1.0)) {
    throw ConfigError("attack.poisoning_rate must lie in [0, 1]");
  }
  if (!(attack.lambda >= 0.0)) throw ConfigError("attack.lambda must be non-negative");
  if (attack.epochs < 1 || prompt.epochs < 0) throw ConfigError("epochs must be positive");
  if (!(attack.learning_rate > 0.0) || !(prompt.learning_rate > 0.0)) throw ConfigError("learning rates must be positive");
  if (attack.batch_size < 1 || prompt.batch_size < 1) throw ConfigError("batch sizes must be positive");
  if (attack.attack_pool < 2) throw ConfigError("attack.attack_pool too small");
  if (prompt.mask_trials < 1) throw ConfigError("prompt.mask_trials must be positive");
  if (!(detector.masking_rate > 0.0 && detector.masking_rate <= 1.0)) {
    throw ConfigError("detector.masking_rate must lie in (0, 1]");
  }
  if (detector.trials < 2) throw ConfigError("detector.trials must be at least 2");
  if (baselines.trials < 2 || baselines.copies < 1) throw ConfigError("baseline trials/copies too small");
  if (!(baselines.replacement_rate > 0.0 && baselines.replacement_rate <= 1.0)) {
    throw ConfigError("baselines.replacement_rate must lie in (0, 1]");
  }
  if (!(baselines.smoothing > 0.0)) throw ConfigError("baselines.smoothing must be positive");
  if (K < 1) throw ConfigError("K must be at least 1");
  if (K * task.layout.num_classes < 2) throw ConfigError("the detector needs at least two anchors");
  if (!(allowance > 0.0 && allowance < 1.0)) throw ConfigError("allowance must lie in (0, 1)");
  if (!(lmi_weight >= 0.0)) throw ConfigError("lmi_weight must be non-negative");
  if (seeds.empty()) throw ConfigError("seeds is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  if (test_clean < 1 || test_poisoned < 1) throw ConfigError("test set sizes must be positive");
}

ExperimentConfig parse_config(std::string_view text) {
  const json root = json::parse(text.begin(), text.end(), nullptr, false);
  if (root.is_discarded()) throw ConfigError("config is not valid JSON");
  ExperimentConfig cfg;
  Reader top(root, "config");

  if (const json* j = top.child("task")) {
    Reader r(*j, "task");
    r.get("num_classes", cfg.task.layout.num_classes);
    r.get("signal_per_class", cfg.task.layout.signal_per_class);
    r.get("filler", cfg.task.layout.filler);
    r.get("trigger_reserve", cfg.task.layout.trigger_reserve);
    r.get("min_length", cfg.task.min_length);
    r.get("max_length", cfg.task.max_length);
    r.get("signal_strength", cfg.task.signal_strength);
    r.get("minority_rate", cfg.task.minority_rate);
    r.get("filler_zipf_exponent", cfg.task.filler_zipf_exponent);
    r.finish();
  }
  if (const json* j = top.child("model")) {
    Reader r(*j, "model");
    r.get("dim", cfg.model.dim);
    r.get("label_tokens_per_class", cfg.model.label_tokens_per_class);
    r.get("init_scale", cfg.model.init_scale);
    r.finish();
  }
  if (const json* j = top.child("attack")) {
    Reader r(*j, "attack");
    std::vector<std::string> kinds;
    r.get("kinds", kinds);
    if (j->contains("kinds")) {
      cfg.attack.kinds.clear();
      for (const auto& k : kinds) cfg.attack.kinds.push_back(sim::parse_attack_kind(k));
    }
    r.get("target", cfg.attack.target);
    r.get("poisoning_rate", cfg.attack.poisoning_rate);
    r.get("lambda", cfg.attack.lambda);
    r.get("epochs", cfg.attack.epochs);
    r.get("learning_rate", cfg.attack.learning_rate);
    r.get("batch_size", cfg.attack.batch_size);
    r.get("attack_pool", cfg.attack.attack_pool);
    r.finish();
  }
  if (const json* j = top.child("prompt")) {
    Reader r(*j, "prompt");
    r.get("epochs", cfg.prompt.epochs);
    r.get("learning_rate", cfg.prompt.learning_rate);
    r.get("batch_size", cfg.prompt.batch_size);
    r.get("mask_trials", cfg.prompt.mask_trials);
    r.get("prompt_trainable", cfg.prompt.prompt_trainable);
    r.finish();
  }
  if (const json* j = top.child("detector")) {
    Reader r(*j, "detector");
    r.get("masking_rate", cfg.detector.masking_rate);
    r.get("trials", cfg.detector.trials);
    r.finish();
  }
  if (const json* j = top.child("baselines")) {
    Reader r(*j, "baselines");
    std::vector<std::string> kinds;
    r.get("kinds", kinds);
    if (j->contains("kinds")) {
      cfg.baselines.kinds.clear();
      for (const auto& k : kinds) cfg.baselines.kinds.push_back(baselines::parse_baseline_kind(k));
    }
    r.get("trials", cfg.baselines.trials);
    r.get("replacement_rate", cfg.baselines.replacement_rate);
    r.get("copies", cfg.baselines.copies);
    r.get("smoothing", cfg.baselines.smoothing);
    r.finish();
  }
  top.get("K", cfg.K);
  top.get("allowance", cfg.allowance);
  top.get("lmi_weight", cfg.lmi_weight);
  top.get("seeds", cfg.seeds);
  top.get("test_clean", cfg.test_clean);
  top.get("test_poisoned", cfg.test_poisoned);
  top.get("output_dir", cfg.output_dir);
  top.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  json attack_kinds = json::array();
  for (auto k : cfg.attack.kinds) attack_kinds.push_back(sim::to_string(k));
  json baseline_kinds = json::array();
  for (auto k : cfg.baselines.kinds) baseline_kinds.push_back(baselines::to_string(k));
  json root = {
      {"task",
       {{"num_classes", cfg.task.layout.num_classes},
        {"signal_per_class", cfg.task.layout.signal_per_class},
        {"filler", cfg.task.layout.filler},
        {"trigger_reserve", cfg.task.layout.trigger_reserve},
        {"min_length", cfg.task.min_length},
        {"max_length", cfg.task.max_length},
        {"signal_strength", cfg.task.signal_strength},
        {"minority_rate", cfg.task.minority_rate},
        {"filler_zipf_exponent", cfg.task.filler_zipf_exponent}}},
      {"model",
       {{"dim", cfg.model.dim},
        {"label_tokens_per_class", cfg.model.label_tokens_per_class},
        {"init_scale", cfg.model.init_scale}}},
      {"attack",
       {{"kinds", attack_kinds},
        {"target", cfg.attack.target},
        {"poisoning_rate", cfg.attack.poisoning_rate},
        {"lambda", cfg.attack.lambda},
        {"epochs", cfg.attack.epochs},
        {"learning_rate", cfg.attack.learning_rate},
        {"batch_size", cfg.attack.batch_size},
        {"attack_pool", cfg.attack.attack_pool}}},
      {"prompt",
       {{"epochs", cfg.prompt.epochs},
        {"learning_rate", cfg.prompt.learning_rate},
        {"batch_size", cfg.prompt.batch_size},
        {"mask_trials", cfg.prompt.mask_trials},
        {"prompt_trainable", cfg.prompt.prompt_trainable}}},
      {"detector", {{"masking_rate", cfg.detector.masking_rate}, {"trials", cfg.detector.trials}}},
      {"baselines",
       {{"kinds", baseline_kinds},
        {"trials", cfg.baselines.trials},
        {"replacement_rate", cfg.baselines.replacement_rate},
        {"copies", cfg.baselines.copies},
        {"smoothing", cfg.baselines.smoothing}}},
      {"K", cfg.K},
      {"allowance", cfg.allowance},
      {"lmi_weight", cfg.lmi_weight},
      {"seeds", cfg.seeds},
      {"test_clean", cfg.test_clean},
      {"test_poisoned", cfg.test_poisoned},
      {"output_dir", cfg.output_dir}};
  return root.dump(2) + "\n";
}

}  // namespace mdp::harness
