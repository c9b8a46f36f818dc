#include "light4gs/trainer/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <variant>

#include "light4gs/errors.hpp"
#include "light4gs/stp/significance.hpp"

namespace l4gs::trainer {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed is stored as a size_t field");
using Field = std::variant<std::size_t TrainConfig::*, double TrainConfig::*,
                           std::vector<std::size_t> TrainConfig::*, std::vector<double> TrainConfig::*>;

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"iterations", &TrainConfig::iterations},
      {"warmup", &TrainConfig::warmup},
      {"aq_start", &TrainConfig::aq_start},
      {"lambda", &TrainConfig::lambda},
      {"alpha", &TrainConfig::alpha},
      {"prune_iterations", &TrainConfig::prune_iterations},
      {"prune_ratios", &TrainConfig::prune_ratios},
      {"lr_position", &TrainConfig::lr_position},
      {"lr_rotation", &TrainConfig::lr_rotation},
      {"lr_scale", &TrainConfig::lr_scale},
      {"lr_opacity", &TrainConfig::lr_opacity},
      {"lr_color", &TrainConfig::lr_color},
      {"lr_plane", &TrainConfig::lr_plane},
      {"lr_deform", &TrainConfig::lr_deform},
      {"lr_context", &TrainConfig::lr_context},
      {"lr_step", &TrainConfig::lr_step},
      {"lr_sh_model", &TrainConfig::lr_sh_model},
      {"momentum", &TrainConfig::momentum},
      {"q_space_only", &TrainConfig::q_space_only},
      {"q_space_time", &TrainConfig::q_space_time},
      {"mhcm_hyper", &TrainConfig::mhcm_hyper},
      {"mhcm_latent", &TrainConfig::mhcm_latent},
      {"mhcm_hidden", &TrainConfig::mhcm_hidden},
      {"seed", &TrainConfig::seed},
      {"threads", &TrainConfig::threads},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty())
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) throw ConfigError("config key '" + key + "': value must be finite");
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, item));
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream o;
  o.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << v[i];
  return o.str();
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name != key) continue;
    std::visit(
        [&](auto member) {
          using M = std::remove_cvref_t<decltype(this->*member)>;
          if constexpr (std::is_same_v<M, std::vector<std::size_t>>)
            this->*member = parse_list<std::size_t>(key, value);
          else if constexpr (std::is_same_v<M, std::vector<double>>)
            this->*member = parse_list<double>(key, value);
          else
            this->*member = parse_number<M>(key, value);
        },
        field);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void TrainConfig::validate() const {
  if (warmup > aq_start) throw ConfigError("warmup must not come after aq_start");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  for (double lr : {lr_position, lr_rotation, lr_scale, lr_opacity, lr_color, lr_plane, lr_deform, lr_context,
                    lr_step, lr_sh_model})
    if (lr < 0.0) throw ConfigError("learning rates must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
  if (!(q_space_only > 0.0) || !(q_space_time > 0.0)) throw ConfigError("initial quantization steps must be > 0");
  if (mhcm_hyper == 0 || mhcm_latent == 0 || mhcm_hidden == 0) throw ConfigError("context model widths must be > 0");
  if (threads == 0) throw ConfigError("threads must be >= 1");
  try {
    stp::PruneSchedule{prune_iterations, prune_ratios}.validate();
  } catch (const InputError& e) {
    throw ConfigError(std::string("prune schedule: ") + e.what());
  }
  for (auto it : prune_iterations)
    if (it >= iterations) throw ConfigError("prune iteration " + std::to_string(it) + " is past the last iteration");
}

std::string TrainConfig::to_text() const {
  std::ostringstream o;
  o.precision(17);
  for (const auto& [name, field] : fields()) {
    o << name << '=';
    std::visit(
        [&](auto member) {
          using M = std::remove_cvref_t<decltype(this->*member)>;
          if constexpr (std::is_same_v<M, std::vector<std::size_t>> || std::is_same_v<M, std::vector<double>>)
            o << join(this->*member);
          else
            o << this->*member;
        },
        field);
    o << '\n';
  }
  return o.str();
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.first);
  return out;
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace l4gs::trainer
