#include "svitq/train.hpp"

#include <cmath>
#include <map>
#include <memory>

#include "net_walker.hpp"
#include "svitq/error.hpp"
#include "svitq/rng.hpp"
#include "svitq/runtime.hpp"

namespace svitq {

namespace {

struct Node {
    Tensor val;
    Tensor grad; // empty until the first accumulation
    std::function<void()> back;
};

void accum(Node* n, const Tensor& g) {
    if (n->grad.data.empty()) n->grad = Tensor(n->val.shape);
    for (size_t i = 0; i < g.numel(); ++i) n->grad.data[i] += g.data[i];
}

class Graph {
public:
    Node* make(Tensor val) {
        nodes_.push_back(std::make_unique<Node>());
        nodes_.back()->val = std::move(val);
        return nodes_.back().get();
    }

    // nodes were created in topological order; walk them backwards
    void backward(Node* output, Tensor seed) {
        accum(output, seed);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node* n = it->get();
            if (n->back && !n->grad.data.empty()) n->back();
        }
    }

private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

class GradEngine {
public:
    using Handle = Node*;

    GradEngine(Graph& graph, const NetworkModel& model) : graph_(graph), model_(model) {}

    void begin_timestep(int) {}

    void register_weight(int layer_id, size_t wi, Node* node) { weights_[{layer_id, wi}] = node; }
    void register_bias(int layer_id, Node* node) { biases_[layer_id] = node; }
    void register_head(Node* w, Node* b) {
        head_w_ = w;
        head_b_ = b;
    }

    Node* layer_conv(const LayerDescriptor& ld, size_t wi, Node* x, kernels::ConvGeom g) {
        Node* w = weights_.at({ld.id, wi});
        Node* b = ld.bias ? biases_.at(ld.id) : nullptr;
        return conv(x, w, b, g);
    }

    Node* head(Node* pooled) { return conv(pooled, head_w_, head_b_, {1, 0, 1}); }

    Node* lif_step(Node* x, int slot) {
        if (states_.size() <= static_cast<size_t>(slot)) states_.resize(slot + 1, nullptr);
        Node* u_prev = states_[static_cast<size_t>(slot)];
        auto out = std::make_shared<kernels::LifOut>(
            kernels::lif_step(u_prev ? u_prev->val : Tensor{}, x->val, lif_));
        Node* spike = graph_.make(out->spike);
        Node* u_next = graph_.make(out->u_next);
        const kernels::LifParams p = lif_;
        spike->back = [x, u_prev, spike, out, p] {
            const Tensor gu = kernels::lif_step_bwd(spike->grad, Tensor{}, *out, p);
            accum(x, gu);
            if (u_prev) accum(u_prev, kernels::scale(gu, p.decay));
        };
        u_next->back = [x, u_prev, u_next, out, p] {
            const Tensor gu = kernels::lif_step_bwd(Tensor{}, u_next->grad, *out, p);
            accum(x, gu);
            if (u_prev) accum(u_prev, kernels::scale(gu, p.decay));
        };
        states_[static_cast<size_t>(slot)] = u_next;
        return spike;
    }

    Node* add(Node* a, Node* b) {
        Node* y = graph_.make(kernels::add(a->val, b->val));
        y->back = [a, b, y] {
            accum(a, y->grad);
            accum(b, y->grad);
        };
        return y;
    }

    Node* hadamard(Node* a, Node* b) {
        Node* y = graph_.make(kernels::hadamard(a->val, b->val));
        y->back = [a, b, y] {
            accum(a, kernels::hadamard(y->grad, b->val));
            accum(b, kernels::hadamard(y->grad, a->val));
        };
        return y;
    }

    Node* scale(Node* a, float s) {
        Node* y = graph_.make(kernels::scale(a->val, s));
        y->back = [a, y, s] { accum(a, kernels::scale(y->grad, s)); };
        return y;
    }

    Node* channel_aggregate(Node* x) {
        Node* y = graph_.make(kernels::channel_aggregate(x->val));
        auto shape = x->val.shape;
        y->back = [x, y, shape] { accum(x, kernels::token_mean_bwd(y->grad, shape)); };
        return y;
    }

    Node* gate(Node* x, Node* agg) {
        Node* y = graph_.make(kernels::gate(x->val, agg->val));
        y->back = [x, agg, y] {
            accum(x, kernels::gate(y->grad, agg->val));
            accum(agg, kernels::gate_bwd_agg(y->grad, x->val));
        };
        return y;
    }

    Node* token_mean(Node* x) { return channel_aggregate(x); }

private:
    Node* conv(Node* x, Node* w, Node* b, kernels::ConvGeom g) {
        Node* y = graph_.make(kernels::conv2d(x->val, w->val, b ? &b->val : nullptr, g));
        y->back = [x, w, b, y, g] {
            accum(x, kernels::conv2d_bwd_input(y->grad, w->val, g, x->val.shape));
            accum(w, kernels::conv2d_bwd_weight(y->grad, x->val, g, w->val.shape));
            if (b) accum(b, kernels::conv2d_bwd_bias(y->grad));
        };
        return y;
    }

    Graph& graph_;
    const NetworkModel& model_;
    kernels::LifParams lif_;
    std::vector<Node*> states_;
    std::map<std::pair<int, size_t>, Node*> weights_;
    std::map<int, Node*> biases_;
    Node* head_w_ = nullptr;
    Node* head_b_ = nullptr;
};

// One trainable tensor plus its Adam state.
struct ParamSlot {
    Tensor* target;
    bool reshape4; // 2-d linear/head weights run through conv kernels as 4-d
    Tensor m, v;
    Node* node = nullptr;
};

class Adam {
public:
    Adam(double lr) : lr_(lr) {}

    void step(std::vector<ParamSlot>& slots) {
        ++t_;
        const double bc1 = 1.0 - std::pow(0.9, t_);
        const double bc2 = 1.0 - std::pow(0.999, t_);
        for (auto& s : slots) {
            if (!s.node || s.node->grad.data.empty()) continue;
            auto& data = s.target->data;
            const auto& g = s.node->grad.data;
            for (size_t i = 0; i < data.size(); ++i) {
                const double gi = g[i];
                s.m.data[i] = static_cast<float>(0.9 * s.m.data[i] + 0.1 * gi);
                s.v.data[i] = static_cast<float>(0.999 * s.v.data[i] + 0.001 * gi * gi);
                const double mh = s.m.data[i] / bc1;
                const double vh = s.v.data[i] / bc2;
                data[i] -= static_cast<float>(lr_ * mh / (std::sqrt(vh) + 1e-8));
            }
        }
    }

private:
    double lr_;
    long t_ = 0;
};

std::vector<ParamSlot> collect_params(NetworkModel& model) {
    std::vector<ParamSlot> slots;
    auto push = [&slots](Tensor& t, bool reshape4) {
        ParamSlot s;
        s.target = &t;
        s.reshape4 = reshape4;
        s.m = Tensor(t.shape);
        s.v = Tensor(t.shape);
        slots.push_back(std::move(s));
    };
    for (auto& ld : model.layers) {
        for (auto& w : ld.weights) push(w, ld.kind == LayerKind::Linear);
        if (ld.bias) push(*ld.bias, false);
    }
    push(model.head_weight, true);
    push(model.head_bias, false);
    return slots;
}

} // namespace

TrainResult train_toy(const NetworkModel& model, const Dataset& train_data,
                      const Dataset& val_data, const TrainOptions& opts) {
    if (train_data.size() == 0 || val_data.size() == 0)
        fail(ErrorCode::InvalidArgument, "training needs non-empty train and validation sets");
    if (opts.batch_size < 1) fail(ErrorCode::InvalidArgument, "batch size must be >= 1");

    TrainResult result;
    result.model = model;
    if (opts.epochs == 0) {
        result.val_accuracy = evaluate(result.model, val_data);
        return result;
    }

    NetworkModel& work = result.model;
    std::vector<ParamSlot> slots = collect_params(work);
    Adam adam(opts.lr);
    Rng rng(derive_seed(opts.seed, "train"));

    std::vector<size_t> order(train_data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(opts.batch_size)) {
            std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                                    order.begin() +
                                        static_cast<long>(std::min(
                                            order.size(),
                                            start + static_cast<size_t>(opts.batch_size))));
            const Batch batch = train_data.select(idx);

            Graph graph;
            GradEngine eng(graph, work);
            // fresh parameter nodes each step; Adam reads their grads afterwards
            {
                size_t slot_i = 0;
                for (auto& ld : work.layers) {
                    for (size_t wi = 0; wi < ld.weights.size(); ++wi) {
                        ParamSlot& s = slots[slot_i++];
                        s.node = graph.make(s.reshape4 ? as_conv_weight(*s.target) : *s.target);
                        eng.register_weight(ld.id, wi, s.node);
                    }
                    if (ld.bias) {
                        ParamSlot& s = slots[slot_i++];
                        s.node = graph.make(*s.target);
                        eng.register_bias(ld.id, s.node);
                    }
                }
                ParamSlot& hw = slots[slot_i++];
                hw.node = graph.make(as_conv_weight(*hw.target));
                ParamSlot& hb = slots[slot_i++];
                hb.node = graph.make(*hb.target);
                eng.register_head(hw.node, hb.node);
            }

            Node* input = graph.make(batch.images);
            NetWalker<GradEngine> walker(eng, work);
            Node* logits = walker.run(input);

            Tensor dlogits;
            const float loss =
                kernels::softmax_cross_entropy(logits->val, batch.labels, &dlogits);
            if (!std::isfinite(loss))
                fail(ErrorCode::Diverged, "training loss became non-finite at epoch " +
                                              std::to_string(epoch + 1) + ", step " +
                                              std::to_string(result.steps + 1));

            graph.backward(logits, std::move(dlogits));
            adam.step(slots);
            ++result.steps;
        }
        result.epoch_val_accuracy.push_back(evaluate(work, val_data));
    }

    result.epochs_run = opts.epochs;
    result.val_accuracy = result.epoch_val_accuracy.back();
    return result;
}

} // namespace svitq
