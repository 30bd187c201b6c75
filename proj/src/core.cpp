#include "maskprop/core.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "maskprop/error.hpp"

namespace maskprop {

void TrainConfig::validate() const {
  if (lambda_ce < 0 || lambda_s < 0 || lambda_t < 0 || lambda_gp < 0)
    throw ConfigError("loss weights must be >= 0");
  if (k_window < 1) throw ConfigError("k_window must be >= 1");
  if (overwrite_threshold < 0 || overwrite_threshold >= 1)
    throw ConfigError("overwrite_threshold must be in [0,1)");
  if (lr <= 0) throw ConfigError("lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (image_size < 1) throw ConfigError("image_size must be >= 1");
  if (pretrain_epochs < 0 || adversarial_epochs < 0)
    throw ConfigError("epoch counts must be >= 0");
  if (critic_steps_per_gen < 1) throw ConfigError("critic_steps_per_gen must be >= 1");
  if (lr_constant_epochs < 0) throw ConfigError("lr_constant_epochs must be >= 0");
}

std::vector<std::string> validate_sequence(const VideoSequence& seq) {
  std::vector<std::string> violations;
  const int t = seq.frame_count();
  if (t < 1) {
    violations.push_back("sequence has no frames (T=0)");
    return violations;
  }
  const int h = seq.frames[0].h, w = seq.frames[0].w;
  for (int i = 0; i < t; ++i) {
    const Image& f = seq.frames[i];
    if (f.c != 3)
      violations.push_back("frame " + std::to_string(i) + ": expected 3 channels, got " +
                           std::to_string(f.c));
    if (f.h != h || f.w != w)
      violations.push_back("frame " + std::to_string(i) + ": size " + std::to_string(f.h) + "x" +
                           std::to_string(f.w) + " != " + std::to_string(h) + "x" +
                           std::to_string(w));
  }
  for (const auto& [id, track] : seq.gt_tracks) {
    if (static_cast<int>(track.size()) != t)
      violations.push_back("track '" + id + "' length " + std::to_string(track.size()) +
                           " != T=" + std::to_string(t));
    for (std::size_t i = 0; i < track.size(); ++i) {
      const Mask& m = track[i];
      if (m.h != h || m.w != w)
        violations.push_back("track '" + id + "' frame " + std::to_string(i) + ": size " +
                             std::to_string(m.h) + "x" + std::to_string(m.w) +
                             " != " + std::to_string(h) + "x" + std::to_string(w));
      else if (!is_binary(m))
        violations.push_back("track '" + id + "' frame " + std::to_string(i) +
                             ": non-binary gt mask");
    }
  }
  return violations;
}

ReferenceSegmentation make_reference(const VideoSequence& seq, const std::string& object_id,
                                     int frame_index) {
  auto it = seq.gt_tracks.find(object_id);
  if (it == seq.gt_tracks.end()) throw IndexError("unknown object id: " + object_id);
  if (frame_index < 0 || frame_index >= seq.frame_count())
    throw IndexError("frame index " + std::to_string(frame_index) + " out of range [0," +
                     std::to_string(seq.frame_count()) + ")");
  const Mask& m = it->second[frame_index];
  if (foreground_count(m) == 0)
    throw EmptyMaskError("object '" + object_id + "' has no foreground pixel in frame " +
                         std::to_string(frame_index));
  ReferenceSegmentation ref;
  ref.frame = seq.frames[frame_index];
  ref.mask = m;
  ref.frame_index = frame_index;
  ref.object_id = object_id;
  return ref;
}

int first_appearance(const VideoSequence& seq, const std::string& object_id) {
  auto it = seq.gt_tracks.find(object_id);
  if (it == seq.gt_tracks.end()) throw IndexError("unknown object id: " + object_id);
  for (std::size_t i = 0; i < it->second.size(); ++i)
    if (foreground_count(it->second[i]) > 0) return static_cast<int>(i);
  return -1;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string serialize_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "# training configuration\n";
  os << "lambda_ce = " << fmt_double(c.lambda_ce) << "\n";
  os << "lambda_s = " << fmt_double(c.lambda_s) << "\n";
  os << "lambda_t = " << fmt_double(c.lambda_t) << "\n";
  os << "lambda_gp = " << fmt_double(c.lambda_gp) << "\n";
  os << "k_window = " << c.k_window << "\n";
  os << "critic_steps_per_gen = " << c.critic_steps_per_gen << "\n";
  os << "lr = " << fmt_double(c.lr) << "\n";
  os << "adam_beta1 = " << fmt_double(c.adam_beta1) << "\n";
  os << "adam_beta2 = " << fmt_double(c.adam_beta2) << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "poly_decay_power = " << fmt_double(c.poly_decay_power) << "\n";
  os << "lr_constant_epochs = " << c.lr_constant_epochs << "\n";
  os << "overwrite_threshold = " << fmt_double(c.overwrite_threshold) << "\n";
  os << "image_size = " << c.image_size << "\n";
  os << "pretrain_epochs = " << c.pretrain_epochs << "\n";
  os << "adversarial_epochs = " << c.adversarial_epochs << "\n";
  os << "seed = " << c.seed << "\n";
  return os.str();
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r");
      auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    auto as_d = [&] { return std::stod(val); };
    auto as_i = [&] { return std::stoi(val); };
    try {
      if (key == "lambda_ce") cfg.lambda_ce = as_d();
      else if (key == "lambda_s") cfg.lambda_s = as_d();
      else if (key == "lambda_t") cfg.lambda_t = as_d();
      else if (key == "lambda_gp") cfg.lambda_gp = as_d();
      else if (key == "k_window") cfg.k_window = as_i();
      else if (key == "critic_steps_per_gen") cfg.critic_steps_per_gen = as_i();
      else if (key == "lr") cfg.lr = as_d();
      else if (key == "adam_beta1") cfg.adam_beta1 = as_d();
      else if (key == "adam_beta2") cfg.adam_beta2 = as_d();
      else if (key == "batch_size") cfg.batch_size = as_i();
      else if (key == "poly_decay_power") cfg.poly_decay_power = as_d();
      else if (key == "lr_constant_epochs") cfg.lr_constant_epochs = as_i();
      else if (key == "overwrite_threshold") cfg.overwrite_threshold = as_d();
      else if (key == "image_size") cfg.image_size = as_i();
      else if (key == "pretrain_epochs") cfg.pretrain_epochs = as_i();
      else if (key == "adversarial_epochs") cfg.adversarial_epochs = as_i();
      else if (key == "seed") cfg.seed = std::stoull(val);
      else throw ConfigError("unknown config key: " + key);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_config(os.str());
}

void save_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write config file: " + path);
  f << serialize_config(cfg);
}

}  // namespace maskprop
