#include "cnrl/learners.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cnrl {

using nlohmann::json;

// ---------------------------------------------------------------- replay

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t min_fill)
    : capacity_(capacity), min_fill_(min_fill) {
  if (capacity_ == 0) throw std::invalid_argument("replay capacity must be positive");
  if (min_fill_ > capacity_) throw std::invalid_argument("replay min_fill exceeds capacity");
}

void ReplayBuffer::push(Transition t) {
  if (t.span_len < 1) throw std::invalid_argument("transition span_len must be >= 1");
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(t));
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (entries_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<Transition> batch;
  batch.reserve(n);
  for (auto i : sample_indices(n, rng)) batch.push_back(entries_[i]);
  return batch;
}

// ---------------------------------------------------------------- config

double EpsilonSchedule::value(long t) const {
  if (t <= 0) return start;
  if (t >= horizon) return end;
  const double frac = static_cast<double>(t) / static_cast<double>(horizon);
  return start + frac * (end - start);
}

void QLearnerConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (static_cast<std::size_t>(batch_size) > min_fill)
    throw std::invalid_argument("batch_size must not exceed min_fill");
  if (target_sync_interval <= 0) throw std::invalid_argument("target_sync_interval must be positive");
  if (updates_per_decision <= 0) throw std::invalid_argument("updates_per_decision must be positive");
  if (epsilon.horizon <= 0) throw std::invalid_argument("epsilon horizon must be positive");
  if (!(reward_scale > 0.0) || !std::isfinite(reward_scale))
    throw std::invalid_argument("reward_scale must be positive and finite");
}

// ---------------------------------------------------------------- policy

QPolicy QPolicy::tabular(int states, int actions, double step_size) {
  if (states <= 0 || actions <= 0) throw std::invalid_argument("tabular Q needs positive dimensions");
  QPolicy p;
  p.impl_ = TabularQ{Eigen::MatrixXd::Zero(states, actions), step_size};
  return p;
}

QPolicy QPolicy::network(int inputs, const std::vector<int>& hidden, int actions, double learning_rate,
                         std::uint64_t seed) {
  std::vector<int> sizes{inputs};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(actions);
  Mlpd net(sizes, Activation::Tanh);
  net.initialize(seed);
  return from_mlp(std::move(net), learning_rate);
}

QPolicy QPolicy::from_mlp(Mlpd net, double learning_rate) {
  QPolicy p;
  const auto n = net.parameter_count();
  p.impl_ = NetworkQ{std::move(net), AdamState<double>(n, learning_rate)};
  return p;
}

int QPolicy::input_size() const {
  if (is_tabular()) return 1;
  return as_network().net.input_size();
}

int QPolicy::num_actions() const {
  if (is_tabular()) return static_cast<int>(as_tabular().table.cols());
  return as_network().net.output_size();
}

Eigen::VectorXd QPolicy::params() const {
  if (is_tabular()) {
    const auto& t = as_tabular().table;
    Eigen::VectorXd flat(t.size());
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) flat[k++] = t(r, c);
    return flat;
  }
  return as_network().net.params();
}

bool QPolicy::same_architecture(const QPolicy& other) const {
  if (is_tabular() != other.is_tabular()) return false;
  if (is_tabular()) {
    return as_tabular().table.rows() == other.as_tabular().table.rows() &&
           as_tabular().table.cols() == other.as_tabular().table.cols();
  }
  return as_network().net.same_shape(other.as_network().net);
}

namespace {

Eigen::Index table_row(const TabularQ& t, const Eigen::VectorXd& obs) {
  if (obs.size() != 1) throw std::invalid_argument("tabular Q expects a 1-d state index observation");
  const double s = std::round(obs[0]);
  if (s < 0 || s >= static_cast<double>(t.table.rows()))
    throw std::invalid_argument("tabular Q state index out of range");
  return static_cast<Eigen::Index>(s);
}

double max_bootstrap(const Eigen::VectorXd& q) { return q.maxCoeff(); }

}  // namespace

Eigen::VectorXd q_values(const QPolicy& policy, const Eigen::VectorXd& obs) {
  Eigen::VectorXd q;
  if (policy.is_tabular()) {
    const auto& t = policy.as_tabular();
    q = t.table.row(table_row(t, obs)).transpose();
  } else {
    const auto& net = policy.as_network().net;
    if (obs.size() != net.input_size()) {
      throw std::invalid_argument("q_values: observation has " + std::to_string(obs.size()) +
                                  " features, policy expects " + std::to_string(net.input_size()));
    }
    q = forward(net, obs);
  }
  if (!q.allFinite()) throw std::domain_error("q_values: non-finite output (diverged)");
  return q;
}

int greedy_action(const Eigen::VectorXd& q) {
  int best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = static_cast<int>(i);
  return best;
}

int select_action(const QPolicy& policy, const Eigen::VectorXd& obs, double eps, Rng& rng) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("select_action: eps outside [0, 1]");
  const Eigen::VectorXd q = q_values(policy, obs);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < eps) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(q.size()) - 1);
    return pick(rng);
  }
  return greedy_action(q);
}

double td_target(const Transition& item, const QPolicy& target, double gamma) {
  if (item.tau) return item.r;
  return item.r + std::pow(gamma, item.span_len) * max_bootstrap(q_values(target, item.s_next));
}

double dqn_update(QPolicy& policy, const QPolicy& target, const std::vector<Transition>& batch,
                  const QLearnerConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("dqn_update: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());

  if (policy.is_tabular()) {
    auto& tab = policy.as_tabular();
    // Average the targets per (state, action) cell, then move each cell toward its mean.
    std::map<std::pair<Eigen::Index, int>, std::pair<double, int>> cells;
    double loss = 0.0;
    for (const auto& t : batch) {
      const auto row = table_row(tab, t.s);
      const double y = td_target(t, target, cfg.gamma);
      const double err = y - tab.table(row, t.action);
      loss += err * err;
      auto& c = cells[{row, t.action}];
      c.first += y;
      c.second += 1;
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) throw std::domain_error("dqn_update: non-finite loss (diverged)");
    for (const auto& [key, acc] : cells) {
      double& q = tab.table(key.first, key.second);
      q += tab.step_size * (acc.first / acc.second - q);
    }
    return loss;
  }

  auto& nq = policy.as_network();
  const auto& tnet = target.as_network().net;
  const Eigen::Index in = nq.net.input_size();
  Eigen::MatrixXd states(in, n);
  Eigen::MatrixXd next(in, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = batch[static_cast<std::size_t>(i)];
    if (t.s.size() != in || t.s_next.size() != in)
      throw std::invalid_argument("dqn_update: transition arity does not match the policy");
    if (t.action < 0 || t.action >= nq.net.output_size())
      throw std::invalid_argument("dqn_update: action index out of range");
    states.col(i) = t.s;
    next.col(i) = t.s_next;
  }
  const Eigen::MatrixXd q_next = forward_batch(tnet, next);

  ForwardCache<double> cache;
  const Eigen::MatrixXd q = forward_batch(nq.net, states, &cache);
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(q.rows(), n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = batch[static_cast<std::size_t>(i)];
    double y = t.r;
    if (!t.tau) y += std::pow(cfg.gamma, t.span_len) * q_next.col(i).maxCoeff();
    const double err = q(t.action, i) - y;
    loss += err * err;
    upstream(t.action, i) = 2.0 * err / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw std::domain_error("dqn_update: non-finite loss (diverged)");

  const Eigen::VectorXd grad = backward_batch(nq.net, cache, upstream);
  Eigen::VectorXd params = nq.net.params();
  nq.adam.learning_rate = cfg.learning_rate;
  adam_step(nq.adam, params, grad);
  nq.net.set_params(params);
  return loss;
}

void sync_target(const QPolicy& policy, QPolicy& target) {
  if (!policy.same_architecture(target)) throw std::invalid_argument("sync_target: architecture mismatch");
  if (policy.is_tabular()) {
    target.as_tabular().table = policy.as_tabular().table;
  } else {
    target.as_network().net.set_params(policy.as_network().net.params());
  }
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr int kCheckpointVersion = 1;

json layers_json(const Mlpd& net) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& w = net.weight(l);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    const auto& b = net.bias(l);
    layers.push_back({{"name", "dense_" + std::to_string(l)},
                      {"shape", {w.rows(), w.cols()}},
                      {"weights", flat},
                      {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  return layers;
}

Mlpd mlp_from_json(const json& j) {
  const auto& layers = j.at("layers");
  if (layers.empty()) throw std::invalid_argument("checkpoint has no layers");
  std::vector<int> sizes{layers.front().at("shape").at(1).get<int>()};
  for (const auto& layer : layers) sizes.push_back(layer.at("shape").at(0).get<int>());
  const std::string act = j.value("activation", "tanh");
  Mlpd net(sizes, act == "linear" ? Activation::Linear : Activation::Tanh);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const auto w = layer.at("weights").get<std::vector<double>>();
    const auto b = layer.at("bias").get<std::vector<double>>();
    auto& W = net.weight(l);
    if (static_cast<Eigen::Index>(w.size()) != W.size() || static_cast<Eigen::Index>(b.size()) != net.bias(l).size())
      throw std::invalid_argument("checkpoint layer " + layer.value("name", std::string("?")) + " has the wrong size");
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[k++];
    for (std::size_t i = 0; i < b.size(); ++i) net.bias(l)[static_cast<Eigen::Index>(i)] = b[i];
  }
  return net;
}

json config_json(const QLearnerConfig& cfg) {
  return {{"gamma", cfg.gamma},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"target_sync_interval", cfg.target_sync_interval},
          {"replay_capacity", cfg.replay_capacity},
          {"min_fill", cfg.min_fill},
          {"epsilon", {{"start", cfg.epsilon.start}, {"end", cfg.epsilon.end}, {"horizon", cfg.epsilon.horizon}}},
          {"hidden", cfg.hidden},
          {"updates_per_decision", cfg.updates_per_decision},
          {"reward_scale", cfg.reward_scale},
          {"seed", cfg.seed}};
}

json parse_checkpoint(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "cnrl.policy") throw std::invalid_argument("not a policy checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw std::invalid_argument("unsupported checkpoint version");
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string save_policy(const QPolicy& policy, const QLearnerConfig& cfg) {
  json j{{"format", "cnrl.policy"}, {"version", kCheckpointVersion}, {"config", config_json(cfg)}};
  if (policy.is_tabular()) {
    const auto& t = policy.as_tabular();
    const Eigen::VectorXd flat = policy.params();
    j["kind"] = "tabular-q";
    j["step_size"] = t.step_size;
    j["layers"] = json::array({{{"name", "table"},
                                {"shape", {t.table.rows(), t.table.cols()}},
                                {"weights", std::vector<double>(flat.data(), flat.data() + flat.size())}}});
  } else {
    j["kind"] = "network-q";
    j["activation"] = "tanh";
    j["layers"] = layers_json(policy.as_network().net);
  }
  return j.dump(1);
}

QPolicy load_policy(const std::string& text) {
  const json j = parse_checkpoint(text);
  const std::string kind = j.at("kind");
  if (kind == "tabular-q") {
    const auto& layer = j.at("layers").at(0);
    const int rows = layer.at("shape").at(0);
    const int cols = layer.at("shape").at(1);
    const auto values = layer.at("weights").get<std::vector<double>>();
    if (values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
      throw std::invalid_argument("tabular checkpoint has the wrong size");
    QPolicy p = QPolicy::tabular(rows, cols, j.value("step_size", 1.0));
    std::size_t k = 0;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) p.as_tabular().table(r, c) = values[k++];
    return p;
  }
  if (kind == "network-q") {
    const double lr = j.at("config").value("learning_rate", 5e-4);
    return QPolicy::from_mlp(mlp_from_json(j), lr);
  }
  throw std::invalid_argument("unknown Q checkpoint kind: " + kind);
}

void save_policy_file(const std::string& path, const QPolicy& policy, const QLearnerConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << save_policy(policy, cfg) << '\n';
}

QPolicy load_policy_file(const std::string& path) { return load_policy(read_file(path)); }

std::string save_mlp(const Mlpd& net, const std::string& kind, const std::vector<double>& output_bounds) {
  json j{{"format", "cnrl.policy"},
         {"version", kCheckpointVersion},
         {"kind", kind},
         {"activation", net.hidden_activation() == Activation::Tanh ? "tanh" : "linear"},
         {"layers", layers_json(net)},
         {"output_bounds", output_bounds}};
  return j.dump(1);
}

Mlpd load_mlp(const std::string& text, std::vector<double>* output_bounds) {
  const json j = parse_checkpoint(text);
  if (output_bounds) *output_bounds = j.value("output_bounds", std::vector<double>{});
  return mlp_from_json(j);
}

}  // namespace cnrl
