#include "svitq/runtime.hpp"

#include <map>

#include "net_walker.hpp"
#include "svitq/error.hpp"

namespace svitq {

namespace {

class EvalEngine {
public:
    using Handle = Tensor;

    EvalEngine(const NetworkModel& model, const SpikeObserver& observer)
        : model_(model), observer_(observer) {
        for (const auto& ld : model.layers)
            if (ld.kind == LayerKind::Linear) linear4_[ld.id] = as_conv_weight(ld.weights[0]);
        head4_ = as_conv_weight(model.head_weight);
    }

    void begin_timestep(int t) { t_ = t; }

    Tensor layer_conv(const LayerDescriptor& ld, size_t wi, const Tensor& x,
                      kernels::ConvGeom g) {
        const Tensor& w = ld.kind == LayerKind::Linear ? linear4_.at(ld.id) : ld.weights[wi];
        const Tensor* bias = ld.bias ? &*ld.bias : nullptr;
        return kernels::conv2d(x, w, bias, g);
    }

    Tensor lif_step(const Tensor& x, int slot) {
        if (states_.size() <= static_cast<size_t>(slot)) states_.resize(slot + 1);
        auto out = kernels::lif_step(states_[static_cast<size_t>(slot)], x, lif_);
        states_[static_cast<size_t>(slot)] = std::move(out.u_next);
        if (observer_) observer_(slot, t_, out.spike);
        return std::move(out.spike);
    }

    Tensor add(const Tensor& a, const Tensor& b) { return kernels::add(a, b); }
    Tensor hadamard(const Tensor& a, const Tensor& b) { return kernels::hadamard(a, b); }
    Tensor scale(const Tensor& a, float s) { return kernels::scale(a, s); }
    Tensor channel_aggregate(const Tensor& x) { return kernels::channel_aggregate(x); }
    Tensor gate(const Tensor& x, const Tensor& agg) { return kernels::gate(x, agg); }
    Tensor token_mean(const Tensor& x) { return kernels::token_mean(x); }

    Tensor head(const Tensor& pooled) {
        return kernels::conv2d(pooled, head4_, &model_.head_bias, {1, 0, 1});
    }

private:
    const NetworkModel& model_;
    const SpikeObserver& observer_;
    kernels::LifParams lif_;
    std::vector<Tensor> states_;
    std::map<int, Tensor> linear4_;
    Tensor head4_;
    int t_ = 0;
};

} // namespace

Tensor forward(const NetworkModel& model, const Batch& batch, const SpikeObserver& observer) {
    if (batch.images.shape.size() != 4)
        fail(ErrorCode::InvalidArgument, "batch images must be (n, c, h, w)");
    if (static_cast<int>(batch.images.shape[1]) != model.config.in_channels ||
        static_cast<int>(batch.images.shape[2]) != model.config.input_h ||
        static_cast<int>(batch.images.shape[3]) != model.config.input_w)
        fail(ErrorCode::InvalidArgument, "batch resolution does not match the model config");

    EvalEngine eng(model, observer);
    NetWalker<EvalEngine> walker(eng, model);
    Tensor logits = walker.run(batch.images);
    // (n, classes, 1, 1) -> (n, classes)
    return Tensor({logits.shape[0], logits.shape[1]}, std::move(logits.data));
}

std::vector<int> predict(const NetworkModel& model, const Dataset& data) {
    constexpr size_t kBatch = 64;
    const size_t n = data.size();
    std::vector<int> out;
    out.reserve(n);
    for (size_t start = 0; start < n; start += kBatch) {
        std::vector<size_t> idx;
        for (size_t i = start; i < std::min(n, start + kBatch); ++i) idx.push_back(i);
        const Batch batch = data.select(idx);
        const Tensor logits = forward(model, batch);
        const size_t classes = logits.shape[1];
        for (size_t i = 0; i < idx.size(); ++i) {
            size_t best = 0;
            for (size_t c = 1; c < classes; ++c)
                if (logits.data[i * classes + c] > logits.data[i * classes + best]) best = c;
            out.push_back(static_cast<int>(best));
        }
    }
    return out;
}

double evaluate(const NetworkModel& model, const Dataset& data) {
    if (data.size() == 0) fail(ErrorCode::InvalidArgument, "cannot evaluate on an empty dataset");
    const std::vector<int> pred = predict(model, data);
    size_t correct = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == data.labels[i]) ++correct;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

Evaluator make_evaluator(const Dataset& data) {
    return [data](const NetworkModel& m) { return evaluate(m, data); };
}

} // namespace svitq
