#include "sdfa/config.hpp"

#include <fstream>
#include <set>

namespace sdfa {

using nlohmann::json;

void to_json(json& j, DecoderKind kind) { j = to_string(kind); }
void from_json(const json& j, DecoderKind& kind) { kind = decoder_kind_from_string(j.get<std::string>()); }
void to_json(json& j, TextureKind kind) { j = to_string(kind); }
void from_json(const json& j, TextureKind& kind) { kind = texture_kind_from_string(j.get<std::string>()); }

namespace {

template <typename Fn>
void visit_network(NetworkConfig& c, const std::string& prefix, Fn&& f) {
  f(prefix + "backbone.name", c.backbone.name);
  f(prefix + "backbone.stage_channels", c.backbone.stage_channels);
  f(prefix + "decoder", c.decoder);
  f(prefix + "decoder_widths", c.decoder_widths);
  f(prefix + "branch_hidden", c.branch_hidden);
  f(prefix + "restoration_channels", c.restoration_channels);
  f(prefix + "seed", c.seed);
  f("levels.d_min", c.d_min);
  f("levels.d_max", c.d_max);
  f("levels.count", c.levels);
}

template <typename Fn>
void visit_train(TrainConfig& c, Fn&& f) {
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("lr", c.lr);
  f("lr_halve_epochs", c.lr_halve_epochs);
  f("adam.beta1", c.adam_beta1);
  f("adam.beta2", c.adam_beta2);
  f("adam.eps", c.adam_eps);
  f("weights.lambda1", c.weights.lambda1);
  f("weights.lambda2", c.weights.lambda2);
  f("weights.lambda3", c.weights.lambda3);
  f("weights.beta", c.weights.beta);
  f("weights.gamma", c.weights.gamma);
  f("weights.sd_start_epoch", c.weights.sd_start_epoch);
  f("thresholds.alpha", c.thresholds.alpha);
  f("thresholds.epsilon", c.thresholds.epsilon);
  f("thresholds.t1", c.thresholds.t1);
  f("thresholds.t2", c.thresholds.t2);
  f("thresholds.k", c.thresholds.k);
  visit_network(c.network, "network.", f);
  f("aug.resize_range", c.aug.resize_range);
  f("aug.crop_hw", c.aug.crop_hw);
  f("aug.hflip_prob", c.aug.hflip_prob);
  f("aug.brightness", c.aug.brightness);
  f("aug.contrast", c.aug.contrast);
  f("aug.saturation", c.aug.saturation);
  f("aug.hue", c.aug.hue);
  f("distill.flip", c.distill.flip);
  f("distill.photo_mask", c.distill.photo_mask);
  f("distill.visible_mask", c.distill.visible_mask);
  f("distill.warm_start", c.distill.warm_start);
  f("seed", c.seed);
  f("perceptual_seed", c.perceptual_seed);
  f("offset_lr_scale", c.offset_lr_scale);
  f("checkpoint_every", c.checkpoint_every);
  f("bn_recalibrate", c.bn_recalibrate);
  f("data.root", c.data_root);
  f("data.train_split", c.train_split);
  f("data.test_split", c.test_split);
}

template <typename Fn>
void visit_synthetic(SyntheticDatasetSpec& s, Fn&& f) {
  f("synthetic.height", s.scene.height);
  f("synthetic.width", s.scene.width);
  f("synthetic.layers", s.scene.layers);
  f("synthetic.layer_disparity", s.scene.layer_disparity);
  f("synthetic.d_min", s.scene.d_min);
  f("synthetic.d_max", s.scene.d_max);
  f("synthetic.texture", s.scene.texture);
  f("synthetic.integer_disparity", s.scene.integer_disparity);
  f("synthetic.depth_tint", s.scene.depth_tint);
  f("synthetic.baseline", s.scene.rig.baseline);
  f("synthetic.focal_x", s.scene.rig.focal_x);
  f("synthetic.train_count", s.train_count);
  f("synthetic.test_count", s.test_count);
  f("synthetic.seed", s.seed);
}

template <typename Config, typename Visit>
json dump_fields(Config config, Visit visit) {
  json out = json::object();
  visit(config, [&](const std::string& key, auto& field) { out[key] = field; });
  return out;
}

template <typename Config, typename Visit>
Config load_fields(const json& doc, Config config, Visit visit, const char* what) {
  const json flat = flatten(doc);
  std::set<std::string> known;
  visit(config, [&](const std::string& key, auto& field) {
    known.insert(key);
    const auto it = flat.find(key);
    if (it == flat.end()) return;
    try {
      it->get_to(field);
    } catch (const std::exception& e) {
      throw ConfigError(std::string(what) + ": bad value for '" + key + "': " + e.what());
    }
  });
  for (const auto& [key, value] : flat.items())
    if (!known.count(key)) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
  return config;
}

}  // namespace

json flatten(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  json out = json::object();
  for (const auto& [key, value] : doc.items()) {
    if (value.is_object()) {
      const json inner = flatten(value);
      for (const auto& [sub, v] : inner.items()) out[key + "." + sub] = v;
    } else {
      out[key] = value;
    }
  }
  return out;
}

json to_json(const TrainConfig& config) {
  return dump_fields(config, [](TrainConfig& c, auto&& f) { visit_train(c, f); });
}

TrainConfig train_config_from_json(const json& flat, const TrainConfig& base) {
  TrainConfig c = load_fields(flat, base, [](TrainConfig& c, auto&& f) { visit_train(c, f); }, "train config");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json to_json(const NetworkConfig& config) {
  return dump_fields(config, [](NetworkConfig& c, auto&& f) { visit_network(c, "network.", f); });
}

NetworkConfig network_config_from_json(const json& flat, const NetworkConfig& base) {
  NetworkConfig c =
      load_fields(flat, base, [](NetworkConfig& c, auto&& f) { visit_network(c, "network.", f); }, "network config");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json to_json(const SyntheticDatasetSpec& spec) {
  return dump_fields(spec, [](SyntheticDatasetSpec& s, auto&& f) { visit_synthetic(s, f); });
}

SyntheticDatasetSpec synthetic_spec_from_json(const json& flat, const SyntheticDatasetSpec& base) {
  SyntheticDatasetSpec s =
      load_fields(flat, base, [](SyntheticDatasetSpec& s, auto&& f) { visit_synthetic(s, f); }, "synthetic config");
  try {
    s.scene.validate();
    require(s.train_count >= 0 && s.test_count >= 0, "synthetic sample counts must be non-negative");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

void apply_override(json& flat, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  flat[key] = std::move(value);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config file '" + path.string() + "' is not valid JSON");
  return flatten(doc);
}

}  // namespace sdfa
