#include "scom/fl/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace scom::fl {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

class KeyValueReader {
 public:
  explicit KeyValueReader(const std::string& text) {
    std::istringstream stream(text);
    std::string line;
    int lineno = 0;
    while (std::getline(stream, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw InvalidArgument("config line " + std::to_string(lineno) +
                              ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty())
        throw InvalidArgument("config line " + std::to_string(lineno) +
                              ": empty key or value");
      entries_[key] = value;
    }
  }

  double number(const std::string& key, double fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    seen_.insert(key);
    size_t used = 0;
    double out = 0.0;
    try {
      out = std::stod(it->second, &used);
    } catch (const std::exception&) {
      throw InvalidArgument("config key '" + key + "': not a number");
    }
    if (used != it->second.size())
      throw InvalidArgument("config key '" + key + "': not a number");
    return out;
  }

  int integer(const std::string& key, int fallback) {
    const double value = number(key, fallback);
    if (value != std::floor(value))
      throw InvalidArgument("config key '" + key + "': expected an integer");
    return static_cast<int>(value);
  }

  std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    seen_.insert(key);
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw InvalidArgument("config key '" + key + "': not an unsigned integer");
    }
  }

  bool flag(const std::string& key, bool fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    seen_.insert(key);
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw InvalidArgument("config key '" + key + "': expected true/false");
  }

  std::string word(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    seen_.insert(key);
    return it->second;
  }

  void reject_unknown() const {
    for (const auto& [key, value] : entries_)
      if (!seen_.count(key))
        throw InvalidArgument("config: unknown key '" + key + "'");
  }

 private:
  std::map<std::string, std::string> entries_;
  std::set<std::string> seen_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void SimConfig::validate() const {
  task.validate();
  geometry.validate();
  if (rounds < 0) throw InvalidArgument("config: negative round count");
  if (learning_rate < 0.0) throw InvalidArgument("config: negative learning rate");
  if (sparsity <= 0.0 || sparsity > 1.0)
    throw InvalidArgument("config: sparsity must lie in (0, 1]");
  if (compression <= 0.0 || compression > 1.0)
    throw InvalidArgument("config: compression must lie in (0, 1]");
  if (streams < 1) throw InvalidArgument("config: streams must be positive");
  if (n_tx < 1 || n_rx < 1) throw InvalidArgument("config: need antennas");
  if (deep_fade_device >= task.devices)
    throw InvalidArgument("config: deep_fade_device out of range");
  if (deep_fade_gain <= 0.0) throw InvalidArgument("config: deep_fade_gain must be positive");
  if (optimize_every < 1) throw InvalidArgument("config: optimize_every must be >= 1");
  if (rho0 < 0.0 || rho0 > 1.0) throw InvalidArgument("config: rho0 must lie in [0, 1]");
  if (aggregation == Aggregation::zero_forcing &&
      streams > std::min(n_tx, n_rx))
    throw InvalidArgument("config: zero-forcing needs streams <= min antennas");
}

SimConfig parse_config_text(const std::string& text) {
  KeyValueReader reader(text);
  SimConfig c;

  const std::string kind = reader.word("task.kind", "logistic");
  if (kind == "logistic") c.task.kind = TaskConfig::Kind::logistic;
  else if (kind == "linear") c.task.kind = TaskConfig::Kind::linear;
  else throw InvalidArgument("config: task.kind must be logistic or linear");

  const std::string split = reader.word("task.split", "iid");
  if (split == "iid") c.task.split = TaskConfig::Split::iid;
  else if (split == "label_skew") c.task.split = TaskConfig::Split::label_skew;
  else throw InvalidArgument("config: task.split must be iid or label_skew");

  c.task.devices = reader.integer("task.devices", c.task.devices);
  c.task.samples_per_device =
      reader.integer("task.samples_per_device", c.task.samples_per_device);
  c.task.feature_dim = reader.integer("task.feature_dim", c.task.feature_dim);
  c.task.classes = reader.integer("task.classes", c.task.classes);
  c.task.classes_per_device =
      reader.integer("task.classes_per_device", c.task.classes_per_device);
  c.task.l2_reg = reader.number("task.l2_reg", c.task.l2_reg);
  c.task.class_separation =
      reader.number("task.class_separation", c.task.class_separation);
  c.task.target_noise = reader.number("task.target_noise", c.task.target_noise);
  c.task.test_samples = reader.integer("task.test_samples", c.task.test_samples);

  c.rounds = reader.integer("run.rounds", c.rounds);
  c.learning_rate = reader.number("run.learning_rate", c.learning_rate);
  c.batch = reader.integer("run.batch", c.batch);
  c.seed = reader.unsigned64("run.seed", c.seed);

  const std::string mode = reader.word("run.aggregation", "scom");
  if (mode == "scom") c.aggregation = Aggregation::scom;
  else if (mode == "ideal") c.aggregation = Aggregation::ideal;
  else if (mode == "zero_forcing") c.aggregation = Aggregation::zero_forcing;
  else throw InvalidArgument("config: run.aggregation must be scom, ideal or zero_forcing");

  c.sparsity = reader.number("codec.sparsity", c.sparsity);
  c.compression = reader.number("codec.compression", c.compression);
  c.streams = reader.integer("codec.streams", c.streams);

  c.n_tx = reader.integer("mimo.tx_antennas", c.n_tx);
  c.n_rx = reader.integer("mimo.rx_antennas", c.n_rx);

  c.geometry.cell_radius_m =
      reader.number("channel.cell_radius_m", c.geometry.cell_radius_m);
  c.geometry.ps_height_m =
      reader.number("channel.ps_height_m", c.geometry.ps_height_m);
  c.geometry.path_loss_exp =
      reader.number("channel.path_loss_exp", c.geometry.path_loss_exp);
  c.geometry.ref_loss = db_to_linear(reader.number("channel.ref_loss_db", -60.0));
  c.geometry.gain_tx = db_to_linear(reader.number("channel.tx_gain_dbi", 5.0));
  c.geometry.gain_rx = db_to_linear(reader.number("channel.rx_gain_dbi", 5.0));
  c.geometry.noise_power_w = dbm_to_watts(reader.number("channel.noise_dbm", -90.0));
  c.geometry.power_budget_w = reader.number("channel.power_w", 0.1);
  c.deep_fade_device = reader.integer("channel.deep_fade_device", -1);
  c.deep_fade_gain = reader.number("channel.deep_fade_gain", c.deep_fade_gain);

  c.optimizer.max_outer = reader.integer("optimizer.max_outer", 50);
  c.optimizer.outer_tol = reader.number("optimizer.outer_tol", 1e-8);
  c.optimizer.admm_penalty = reader.number("optimizer.admm_penalty", 1e-4);
  c.optimizer.admm_tol = reader.number("optimizer.admm_tol", 1e-4);
  c.optimizer.max_inner = reader.integer("optimizer.max_inner", 4000);
  const std::string rho_mode = reader.word("optimizer.rho_mode", "measured");
  if (rho_mode == "measured") c.rho_mode = RhoMode::measured;
  else if (rho_mode == "constant") c.rho_mode = RhoMode::constant;
  else throw InvalidArgument("config: optimizer.rho_mode must be measured or constant");
  c.rho0 = reader.number("optimizer.rho0", c.rho0);
  c.optimize_every = reader.integer("optimizer.every", 1);

  c.turbo.max_iter = reader.integer("turbo.max_iter", 50);
  c.turbo.tol = reader.number("turbo.tol", 1e-6);
  c.turbo.em_prior = reader.flag("turbo.em", false);
  c.turbo.damping = reader.number("turbo.damping", 0.0);

  reader.reject_unknown();
  c.validate();
  return c;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string to_string(Aggregation mode) {
  switch (mode) {
    case Aggregation::scom: return "scom";
    case Aggregation::ideal: return "ideal";
    case Aggregation::zero_forcing: return "zero_forcing";
  }
  return "?";
}

std::string serialize_config(const SimConfig& c) {
  std::ostringstream out;
  out << "task.kind = "
      << (c.task.kind == TaskConfig::Kind::logistic ? "logistic" : "linear") << '\n'
      << "task.split = "
      << (c.task.split == TaskConfig::Split::iid ? "iid" : "label_skew") << '\n'
      << "task.devices = " << c.task.devices << '\n'
      << "task.samples_per_device = " << c.task.samples_per_device << '\n'
      << "task.feature_dim = " << c.task.feature_dim << '\n'
      << "task.classes = " << c.task.classes << '\n'
      << "task.classes_per_device = " << c.task.classes_per_device << '\n'
      << "task.l2_reg = " << fmt(c.task.l2_reg) << '\n'
      << "task.class_separation = " << fmt(c.task.class_separation) << '\n'
      << "task.target_noise = " << fmt(c.task.target_noise) << '\n'
      << "task.test_samples = " << c.task.test_samples << '\n'
      << "run.rounds = " << c.rounds << '\n'
      << "run.learning_rate = " << fmt(c.learning_rate) << '\n'
      << "run.batch = " << c.batch << '\n'
      << "run.seed = " << c.seed << '\n'
      << "run.aggregation = " << to_string(c.aggregation) << '\n'
      << "codec.sparsity = " << fmt(c.sparsity) << '\n'
      << "codec.compression = " << fmt(c.compression) << '\n'
      << "codec.streams = " << c.streams << '\n'
      << "mimo.tx_antennas = " << c.n_tx << '\n'
      << "mimo.rx_antennas = " << c.n_rx << '\n'
      << "channel.cell_radius_m = " << fmt(c.geometry.cell_radius_m) << '\n'
      << "channel.ps_height_m = " << fmt(c.geometry.ps_height_m) << '\n'
      << "channel.path_loss_exp = " << fmt(c.geometry.path_loss_exp) << '\n'
      << "channel.ref_loss_db = " << fmt(10.0 * std::log10(c.geometry.ref_loss)) << '\n'
      << "channel.tx_gain_dbi = " << fmt(10.0 * std::log10(c.geometry.gain_tx)) << '\n'
      << "channel.rx_gain_dbi = " << fmt(10.0 * std::log10(c.geometry.gain_rx)) << '\n'
      << "channel.noise_dbm = "
      << fmt(10.0 * std::log10(c.geometry.noise_power_w * 1e3)) << '\n'
      << "channel.power_w = " << fmt(c.geometry.power_budget_w) << '\n'
      << "channel.deep_fade_device = " << c.deep_fade_device << '\n'
      << "channel.deep_fade_gain = " << fmt(c.deep_fade_gain) << '\n'
      << "optimizer.max_outer = " << c.optimizer.max_outer << '\n'
      << "optimizer.outer_tol = " << fmt(c.optimizer.outer_tol) << '\n'
      << "optimizer.admm_penalty = " << fmt(c.optimizer.admm_penalty) << '\n'
      << "optimizer.admm_tol = " << fmt(c.optimizer.admm_tol) << '\n'
      << "optimizer.max_inner = " << c.optimizer.max_inner << '\n'
      << "optimizer.rho_mode = "
      << (c.rho_mode == RhoMode::measured ? "measured" : "constant") << '\n'
      << "optimizer.rho0 = " << fmt(c.rho0) << '\n'
      << "optimizer.every = " << c.optimize_every << '\n'
      << "turbo.max_iter = " << c.turbo.max_iter << '\n'
      << "turbo.tol = " << fmt(c.turbo.tol) << '\n'
      << "turbo.em = " << (c.turbo.em_prior ? "true" : "false") << '\n'
      << "turbo.damping = " << fmt(c.turbo.damping) << '\n';
  return out.str();
}

}  // namespace scom::fl
