#pragma once

// Shared interpreter for the four-stage architecture. The same walk drives
// inference and training so the two paths cannot diverge; the Engine supplies
// the op implementations (plain tensors for inference, autodiff nodes for
// training).
//
// Block bodies (all convs consume spikes except the very first image conv):
//   downsample          x <- conv_s2(lif(x))            (stride 1 in stage 4)
//   conv SNN block      x <- x + pw(lif(dw(lif(pw(lif(x))))))
//                       x <- x + conv(lif(conv(lif(x))))
//   transformer block   x <- x + rep1(lif(x))
//                       q,k,v <- 1x1 projections of lif(x); spike-encode each;
//                       att <- spike_q * token_aggregate(spike_k * spike_v)
//                       x <- x + rep2(lif(att))
//                       x <- x + rep4(lif(rep3(lif(x))))
//                       x <- x + lin2(lif(lin1(lif(x))))
//   head                logits_t <- head(token_mean(lif(x))), averaged over t

#include "svitq/error.hpp"
#include "svitq/kernels.hpp"
#include "svitq/model.hpp"

namespace svitq {

template <class Engine>
class NetWalker {
public:
    using H = typename Engine::Handle;

    NetWalker(Engine& eng, const NetworkModel& model) : eng_(eng), model_(model) {}

    // Full forward over model.timesteps(); returns (n, classes, 1, 1) logits.
    H run(const H& input) {
        H logits{};
        const int t_count = model_.timesteps();
        for (int t = 0; t < t_count; ++t) {
            eng_.begin_timestep(t);
            slot_ = 0;
            H step = timestep(input);
            logits = t == 0 ? step : eng_.add(logits, step);
        }
        return eng_.scale(logits, 1.0f / static_cast<float>(t_count));
    }

private:
    H lif(const H& x) { return eng_.lif_step(x, slot_++); }

    H conv(int layer_id, size_t wi, const H& x, kernels::ConvGeom g) {
        return eng_.layer_conv(model_.layer(layer_id), wi, x, g);
    }

    H timestep(const H& input) {
        H x = input;
        bool first_conv = true;
        for (const auto& stage : model_.stages) {
            for (const auto& block : stage.blocks) {
                switch (block.kind) {
                    case BlockKind::Downsample: {
                        const int id = block.layer_ids.at(0);
                        kernels::ConvGeom g{stage.index == 4 ? 1 : 2, 1, 1};
                        // the stem consumes the raw image; everything after
                        // runs on spikes
                        x = first_conv ? conv(id, 0, x, g) : conv(id, 0, lif(x), g);
                        first_conv = false;
                        break;
                    }
                    case BlockKind::ConvBlock: {
                        const auto& ids = block.layer_ids;
                        const size_t ch = channels_of(ids.at(1));
                        H h = conv(ids.at(0), 0, lif(x), {1, 0, 1});
                        h = conv(ids.at(1), 0, lif(h), {1, 1, static_cast<int>(ch)});
                        h = conv(ids.at(2), 0, lif(h), {1, 0, 1});
                        x = eng_.add(x, h);
                        h = conv(ids.at(3), 0, lif(x), {1, 1, 1});
                        h = conv(ids.at(4), 0, lif(h), {1, 1, 1});
                        x = eng_.add(x, h);
                        break;
                    }
                    case BlockKind::TransformerBlock: {
                        const auto& ids = block.layer_ids;
                        // ids: rep1, sdsa, rep2, rep3, rep4, lin1, lin2
                        H h = conv(ids.at(0), 0, lif(x), {1, 1, 1});
                        x = eng_.add(x, h);

                        H s = lif(x);
                        H sq = lif(conv(ids.at(1), 0, s, {1, 0, 1}));
                        H sk = lif(conv(ids.at(1), 1, s, {1, 0, 1}));
                        H sv = lif(conv(ids.at(1), 2, s, {1, 0, 1}));
                        H att = eng_.gate(sq, eng_.channel_aggregate(eng_.hadamard(sk, sv)));
                        x = eng_.add(x, conv(ids.at(2), 0, lif(att), {1, 1, 1}));

                        h = conv(ids.at(3), 0, lif(x), {1, 1, 1});
                        h = conv(ids.at(4), 0, lif(h), {1, 1, 1});
                        x = eng_.add(x, h);

                        h = conv(ids.at(5), 0, lif(x), {1, 0, 1});
                        h = conv(ids.at(6), 0, lif(h), {1, 0, 1});
                        x = eng_.add(x, h);
                        break;
                    }
                }
            }
        }
        return eng_.head(eng_.token_mean(lif(x)));
    }

    size_t channels_of(int layer_id) const {
        return model_.layer(layer_id).weights.at(0).shape.at(0);
    }

    Engine& eng_;
    const NetworkModel& model_;
    int slot_ = 0;
};

// Linear and head weights are stored 2-d; the conv kernels want (o, i, 1, 1).
inline Tensor as_conv_weight(const Tensor& w) {
    if (w.shape.size() == 4) return w;
    if (w.shape.size() == 2) return Tensor({w.shape[0], w.shape[1], 1, 1}, w.data);
    fail(ErrorCode::Internal, "unexpected weight rank");
}

} // namespace svitq
