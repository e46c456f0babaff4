#include "cnrl/execution.hpp"

#include <limits>
#include <stdexcept>

namespace cnrl {

void PolicyBindings::bind_control(const ConceptId& id, std::shared_ptr<ControlPolicy> policy, bool trained) {
  controls_[id] = ControlBinding{std::move(policy), trained};
}

void PolicyBindings::bind_selector(const ConceptId& id, std::shared_ptr<const QPolicy> q, double gamma) {
  selectors_[id] = SelectorBinding{std::move(q), gamma, {}};
}

void PolicyBindings::bind_selector_rule(const ConceptId& id, std::function<int(const Observation&)> rule,
                                        double gamma) {
  selectors_[id] = SelectorBinding{nullptr, gamma, std::move(rule)};
}

const ControlBinding* PolicyBindings::control(const ConceptId& id) const {
  auto it = controls_.find(id);
  return it == controls_.end() ? nullptr : &it->second;
}

const SelectorBinding* PolicyBindings::selector(const ConceptId& id) const {
  auto it = selectors_.find(id);
  return it == selectors_.end() ? nullptr : &it->second;
}

void PolicyBindings::require_complete(const ConceptNetwork& net) const {
  for (const auto& id : net.training_order()) {
    const auto& node = net.node(id);
    if (node.kind == ConceptKind::Selector) {
      const auto* b = selector(id);
      if (!b || (!b->q && !b->rule)) throw std::invalid_argument("selector " + id.str() + " has no policy");
    } else if (node.kind == ConceptKind::Control) {
      const auto* b = control(id);
      if (!b || !b->policy) throw std::invalid_argument("control concept " + id.str() + " has no policy");
      if (!b->trained) throw std::invalid_argument("control concept " + id.str() + " is untrained");
    }
  }
}

double EpisodeTrace::total_reward() const {
  double sum = 0.0;
  for (const auto& s : steps) sum += s.transition.r;
  return sum;
}

namespace {

struct CompiledNode {
  std::optional<CompiledObservation> obs;
  CompiledRegion region;
  CompiledRegion eval_region;
  std::vector<CompiledCondition> terminals;
};

class Runner {
 public:
  Runner(const ConceptNetwork& net, const PolicyBindings& policies, Environment& env, const RunOptions& options)
      : net_(net), policies_(policies), env_(env), options_(options), rng_(options.seed) {
    const SchemaPtr schema = env_.schema();
    compiled_.resize(net_.size());
    for (std::size_t i = 0; i < net_.size(); ++i) {
      const auto& node = net_.node(i);
      if (node.kind == ConceptKind::Transformation) continue;
      auto& c = compiled_[i];
      c.obs.emplace(net_.observation_spec(i), schema);
      const auto& out = *c.obs->output_schema();
      c.region = CompiledRegion(node.validity, out);
      c.eval_region = node.eval_validity ? CompiledRegion(*node.eval_validity, out) : c.region;
      for (const auto& t : node.terminal) c.terminals.emplace_back(t, out);
    }
  }

  EpisodeTrace run() {
    int activations = 0;
    while (!done_ && steps_ < options_.step_cap) {
      activate(net_.root_index(), -1);
      ++activations;
      if (options_.max_root_activations > 0 && activations >= options_.max_root_activations) break;
    }
    trace_.total_env_steps = steps_;
    trace_.success = env_.task_success();
    return std::move(trace_);
  }

 private:
  struct Frame {
    std::string reward_id;
    double gamma = 1.0;
    double discount = 1.0;
    double acc = 0.0;
    double raw_last = 0.0;
    int local = 0;
  };

  Observation observe(std::size_t i) const { return compiled_[i].obs->apply(env_.features()); }

  int open_span(std::size_t i, int parent) {
    Span s;
    s.concept_id = net_.node(i).id;
    s.parent = parent;
    s.start_step = steps_;
    trace_.spans.push_back(s);
    return static_cast<int>(trace_.spans.size()) - 1;
  }

  int activate(std::size_t i, int parent) {
    const auto& node = net_.node(i);
    if (node.kind == ConceptKind::Selector) return run_selector(i, parent);
    if (node.kind == ConceptKind::Control) return run_control(i, parent);
    throw std::logic_error("transformation " + node.id.str() + " cannot be activated");
  }

  void do_step(const Eigen::VectorXd& action, std::size_t actor, bool noop, int control_step) {
    StepRecord rec;
    rec.concept_id = net_.node(actor).id;
    rec.noop = noop;
    rec.transition.s = env_.features().values;
    rec.transition.action_vector = action;
    env_.step(action);
    ++steps_;
    for (auto& f : frames_) {
      f.raw_last = env_.reward(f.reward_id, f.local);
      f.acc += f.discount * f.raw_last;
      f.discount *= f.gamma;
      ++f.local;
    }
    const auto& root = net_.root();
    const double r_root = root.kind == ConceptKind::Selector ? frames_.front().raw_last
                                                              : env_.reward(root.reward, control_step);
    trace_.spans[static_cast<std::size_t>(root_span_)].cumulative_reward += r_root;
    done_ = env_.task_success() || steps_ >= options_.step_cap;
    rec.transition.r = r_root;
    rec.transition.tau = env_.task_success();
    rec.transition.s_next = env_.features().values;
    trace_.steps.push_back(std::move(rec));
  }

  int run_selector(std::size_t i, int parent) {
    const auto& node = net_.node(i);
    const auto* binding = policies_.selector(node.id);
    if (!binding || (!binding->q && !binding->rule)) {
      throw std::invalid_argument("selector " + node.id.str() + " has no policy");
    }
    const auto& children = net_.children(i);
    if (binding->q && binding->q->num_actions() != static_cast<int>(children.size())) {
      throw std::invalid_argument("selector " + node.id.str() + " policy has " +
                                  std::to_string(binding->q->num_actions()) + " outputs for " +
                                  std::to_string(children.size()) + " children");
    }
    const Observation obs = observe(i);
    const bool explore = options_.mode == RunMode::Train && options_.trainee && *options_.trainee == node.id;
    const double eps = explore && options_.epsilon ? options_.epsilon() : 0.0;
    const int choice = binding->q ? select_action(*binding->q, obs.values, eps, rng_) : binding->rule(obs);
    if (choice < 0 || choice >= static_cast<int>(children.size())) {
      throw std::invalid_argument("selector " + node.id.str() + " chose child " + std::to_string(choice) + " of " +
                                  std::to_string(children.size()));
    }

    const int span = open_span(i, parent);
    if (parent < 0) root_span_ = span;
    const int start = steps_;
    frames_.push_back(Frame{node.reward, binding->gamma});
    const int child_span = activate(children[static_cast<std::size_t>(choice)], span);
    const Frame frame = frames_.back();
    frames_.pop_back();

    SelectorDecision d;
    d.selector = node.id;
    d.child = choice;
    d.start_step = start;
    d.span = child_span;
    d.transition.s = obs.values;
    d.transition.action = choice;
    d.transition.r = frame.acc;
    d.transition.tau = env_.task_success();
    d.transition.s_next = observe(i).values;
    d.transition.span_len = steps_ - start;

    auto& child = trace_.spans[static_cast<std::size_t>(child_span)];
    child.cumulative_reward = frame.acc;
    auto& self = trace_.spans[static_cast<std::size_t>(span)];
    self.end_step = steps_;
    self.termination = child.termination;
    self.noop = child.noop;

    ++trace_.selector_decisions[node.id];
    trace_.decisions.push_back(d);
    if (options_.on_decision) options_.on_decision(trace_.decisions.back());
    return span;
  }

  std::optional<TerminationKind> classify(std::size_t i, const Eigen::VectorXd& obs, int k, int budget,
                                          const CompiledRegion& region) const {
    const auto& c = compiled_[i];
    auto fired = [&](TerminationKind kind) {
      for (const auto& t : c.terminals)
        if (t.kind() == kind && t.holds(obs)) return true;
      return false;
    };
    if (fired(TerminationKind::Goal)) return TerminationKind::Goal;
    if (fired(TerminationKind::RegionExit) || !region.contains(obs)) return TerminationKind::RegionExit;
    if (k >= budget || fired(TerminationKind::StepBudget)) return TerminationKind::StepBudget;
    if (done_ || fired(TerminationKind::EpisodeEnd)) return TerminationKind::EpisodeEnd;
    return std::nullopt;
  }

  int run_control(std::size_t i, int parent) {
    const auto& node = net_.node(i);
    const auto* binding = policies_.control(node.id);
    if (!binding || !binding->policy) throw std::invalid_argument("control concept " + node.id.str() + " has no policy");
    const int span = open_span(i, parent);
    if (parent < 0) root_span_ = span;
    const auto& c = compiled_[i];
    const CompiledRegion& region = options_.mode == RunMode::Eval ? c.eval_region : c.region;

    Observation obs = observe(i);
    if (!region.contains(obs.values)) {
      // Chosen outside its validity region: one zero-velocity step.
      do_step(Eigen::VectorXd::Zero(env_.action_size()), i, true, 0);
      auto& s = trace_.spans[static_cast<std::size_t>(span)];
      s.end_step = steps_;
      s.termination = TerminationKind::RegionExit;
      s.noop = true;
      return span;
    }

    const int budget = net_.has_parent(i) ? node.max_steps : std::numeric_limits<int>::max();
    binding->policy->begin_activation();
    int k = 0;
    TerminationKind why = TerminationKind::EpisodeEnd;
    while (true) {
      const Eigen::VectorXd full = apply_action_map(node.action_map, binding->policy->act(obs));
      if (full.size() != env_.action_size()) {
        throw std::invalid_argument("control concept " + node.id.str() + " produced an action of size " +
                                    std::to_string(full.size()) + ", environment expects " +
                                    std::to_string(env_.action_size()));
      }
      do_step(full, i, false, k);
      ++k;
      obs = observe(i);
      if (auto t = classify(i, obs.values, k, budget, region)) {
        why = *t;
        break;
      }
    }
    auto& s = trace_.spans[static_cast<std::size_t>(span)];
    s.end_step = steps_;
    s.termination = why;
    return span;
  }

  const ConceptNetwork& net_;
  const PolicyBindings& policies_;
  Environment& env_;
  const RunOptions& options_;
  Rng rng_;
  std::vector<CompiledNode> compiled_;
  std::vector<Frame> frames_;
  EpisodeTrace trace_;
  int steps_ = 0;
  int root_span_ = -1;
  bool done_ = false;
};

}  // namespace

EpisodeTrace run_episode(const ConceptNetwork& net, const PolicyBindings& policies, Environment& env,
                         const RunOptions& options) {
  if (options.step_cap <= 0) throw std::invalid_argument("run_episode: step cap must be positive");
  return Runner(net, policies, env, options).run();
}

}  // namespace cnrl
