#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "svitq/error.hpp"
#include "svitq/model.hpp"
#include "svitq/quant.hpp"
#include "svitq/rng.hpp"

using namespace svitq;

namespace {

// independent of the engine: quantize one value the way the formulas read,
// with the quotient x/S expanded to x * Q_range / w_range so exact half-step
// ratios survive floating point
int64_t oracle_code(double x, double w_min, double w_max, int64_t q_min, int64_t q_max) {
    double r = x * static_cast<double>(q_max - q_min) / (w_max - w_min);
    r = r >= 0 ? std::floor(r + 0.5) : std::ceil(r - 0.5); // half away from zero
    if (r < static_cast<double>(q_min)) r = static_cast<double>(q_min);
    if (r > static_cast<double>(q_max)) r = static_cast<double>(q_max);
    return static_cast<int64_t>(r);
}

int64_t oracle_code(double x, const QuantParams& p) {
    return oracle_code(x, p.w_min, p.w_max, p.q_min, p.q_max);
}

} // namespace

TEST_CASE("quant_range matches the two's-complement window") {
    CHECK(quant_range(8) == std::pair<int64_t, int64_t>{-128, 127});
    CHECK(quant_range(4) == std::pair<int64_t, int64_t>{-8, 7});
    CHECK(quant_range(12) == std::pair<int64_t, int64_t>{-2048, 2047});
    CHECK(quant_range(16) == std::pair<int64_t, int64_t>{-32768, 32767});
    CHECK_THROWS_AS(quant_range(5), Error);
    CHECK_THROWS_AS(quant_range(32), Error);
}

TEST_CASE("compute_scale on worked ranges") {
    Tensor t({3}, {-1.0f, 0.25f, 1.0f});
    QuantParams p = compute_scale(t, 8);
    CHECK(p.w_min == doctest::Approx(-1.0));
    CHECK(p.w_max == doctest::Approx(1.0));
    CHECK(p.scale == doctest::Approx(2.0 / 255.0));
    CHECK_FALSE(p.degenerate);

    Tensor t2({2}, {-0.5f, 1.5f});
    CHECK(compute_scale(t2, 4).scale == doctest::Approx(2.0 / 15.0));

    CHECK_THROWS_AS(compute_scale(Tensor{}, 8), Error);
}

TEST_CASE("degenerate constant tensor maps to code zero instead of erroring") {
    Tensor t({4}, {0.0f, 0.0f, 0.0f, 0.0f});
    QuantParams p = compute_scale(t, 8);
    CHECK(p.degenerate);
    CHECK(p.scale == 1.0);
    QuantizedTensor q = quantize_tensor(t, 8);
    for (int32_t c : q.q_data) CHECK(c == 0);
    Tensor back = dequantize(q);
    for (float v : back.data) CHECK(v == 0.0f);

    Tensor t3({2}, {3.25f, 3.25f});
    QuantizedTensor q3 = quantize_tensor(t3, 4);
    CHECK(q3.params.degenerate);
    CHECK(q3.params.w_min == doctest::Approx(3.25));
    for (int32_t c : q3.q_data) CHECK(c == 0);
}

TEST_CASE("worked example codes at 8 bit") {
    Tensor t({3}, {-1.0f, 0.0f, 1.0f});
    QuantizedTensor q = quantize_tensor(t, 8);
    // 1.0 / (2/255) = 127.5 rounds away to 128 and clamps to 127
    CHECK(q.q_data == std::vector<int32_t>{-128, 0, 127});
    Tensor back = dequantize(q);
    CHECK(back.data[0] == doctest::Approx(-128.0 * 2.0 / 255.0));
    CHECK(back.data[1] == 0.0f);
    CHECK(back.data[2] == doctest::Approx(127.0 * 2.0 / 255.0));
}

TEST_CASE("worked example codes at 4 bit") {
    Tensor t({2}, {-0.004f, 0.004f});
    QuantizedTensor q = quantize_tensor(t, 4);
    CHECK(q.q_data == std::vector<int32_t>{-8, 7});
}

TEST_CASE("codes stay inside the range and match the scalar oracle") {
    Rng rng(123);
    for (int round = 0; round < 50; ++round) {
        const size_t n = 1 + rng.below(64);
        Tensor t({n});
        const double spread = rng.uniform(0.01, 10.0);
        const double center = rng.uniform(-5.0, 5.0);
        for (auto& v : t.data) v = static_cast<float>(center + rng.uniform(-spread, spread));
        for (int bit : {4, 8, 12, 16}) {
            QuantizedTensor q = quantize_tensor(t, bit);
            if (q.params.degenerate) continue;
            for (size_t i = 0; i < n; ++i) {
                CHECK(q.q_data[i] >= q.params.q_min);
                CHECK(q.q_data[i] <= q.params.q_max);
                CHECK(q.q_data[i] == oracle_code(t.data[i], q.params));
            }
        }
    }
}

TEST_CASE("symmetric-range reconstruction error bounded by half a step") {
    Rng rng(7);
    for (int round = 0; round < 200; ++round) {
        const size_t n = 2 + rng.below(32);
        const double m = rng.uniform(0.05, 4.0);
        Tensor t({n});
        t.data[0] = static_cast<float>(-m);
        t.data[1] = static_cast<float>(m);
        for (size_t i = 2; i < n; ++i) t.data[i] = static_cast<float>(rng.uniform(-m, m));
        double prev_max_err = -1.0;
        for (int bit : {4, 8, 12, 16}) {
            QuantizedTensor q = quantize_tensor(t, bit);
            // reconstruction error measured in double; the float32 copy the
            // runtime consumes adds one more rounding on top of this
            double max_err = 0.0;
            for (size_t i = 0; i < n; ++i)
                max_err = std::max(
                    max_err, std::fabs(static_cast<double>(q.q_data[i]) * q.params.scale -
                                       static_cast<double>(t.data[i])));
            CHECK(max_err <= q.params.scale / 2 + 1e-9);
            if (prev_max_err >= 0) CHECK(max_err <= prev_max_err + 1e-12); // finer bit, finer error
            prev_max_err = max_err;
        }
    }
}

TEST_CASE("scale shrinks as bits grow") {
    Tensor t({2}, {-1.0f, 1.0f});
    double prev = 1e9;
    for (int bit : {4, 8, 12, 16}) {
        const double s = compute_scale(t, bit).scale;
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("faithful mode implements the zero-point-free formula on asymmetric tensors") {
    // range [0, 10] at 8 bit: codes above q_max all clamp
    Tensor t({3}, {0.0f, 5.0f, 10.0f});
    QuantizedTensor q = quantize_tensor(t, 8, QuantMode::Faithful);
    CHECK(q.params.scale == doctest::Approx(10.0 / 255.0));
    CHECK(q.q_data == std::vector<int32_t>{0, 127, 127}); // 5/S = 127.5 -> 128 -> clamp

    QuantizedTensor qs = quantize_tensor(t, 8, QuantMode::Symmetric);
    CHECK(qs.params.w_min == doctest::Approx(-10.0));
    CHECK(qs.params.scale == doctest::Approx(20.0 / 255.0));
    CHECK(qs.q_data == std::vector<int32_t>{0, 64, 127});
}

TEST_CASE("re-quantizing a grid-aligned tensor reproduces the codes") {
    const auto [q_min, q_max] = quant_range(8);
    const double scale = 0.013;
    Tensor t({4});
    t.data = {static_cast<float>(q_min * scale), static_cast<float>(q_max * scale),
              static_cast<float>(17 * scale), static_cast<float>(-56 * scale)};
    QuantizedTensor q1 = quantize_tensor(t, 8);
    Tensor back = dequantize(q1);
    QuantizedTensor q2 = quantize_tensor(back, 8);
    CHECK(q1.q_data == q2.q_data);
}

TEST_CASE("quantize_layer at 32 bits is the identity") {
    NetworkModel m = test::make_mini_model(3);
    NetworkModel out = quantize_layer(m, 2, 32);
    CHECK(models_bit_identical(m, out));
    CHECK(out.precision_map.at(2) == 32);
}

TEST_CASE("quantize_layer touches exactly one layer and matches the formula") {
    NetworkModel m = test::make_mini_model(4);
    NetworkModel out = quantize_layer(m, 3, 8);
    CHECK(diff_layers(m, out) == std::vector<int>{3});
    CHECK(out.precision_map.at(3) == 8);

    const Tensor& orig = m.layer(3).weights[0];
    const Tensor& got = out.layer(3).weights[0];
    const QuantParams p = compute_scale(orig, 8);
    for (size_t i = 0; i < orig.numel(); ++i) {
        const int64_t code = oracle_code(orig.data[i], p);
        CHECK(got.data[i] ==
              doctest::Approx(static_cast<double>(code) * p.scale).epsilon(1e-6));
    }
    // bias untouched
    CHECK(bit_identical(*m.layer(3).bias, *out.layer(3).bias));
}

TEST_CASE("sdsa layers quantize all three tensors independently") {
    NetworkModel m = test::make_mini_model(2);
    // convert layer 2 into an sdsa layer with three distinct tensors
    auto& ld = m.layer(2);
    ld.kind = LayerKind::SDSA;
    ld.bias.reset();
    ld.weights.clear();
    Rng rng(3);
    for (int i = 0; i < 3; ++i) {
        Tensor w({2, 2, 1, 1});
        for (auto& v : w.data) v = static_cast<float>(rng.uniform(-1.0 - i, 1.0 + i));
        ld.weights.push_back(std::move(w));
    }

    NetworkModel out = quantize_layer(m, 2, 16);
    CHECK(diff_layers(m, out) == std::vector<int>{2});
    for (int i = 0; i < 3; ++i) {
        const QuantParams p = compute_scale(m.layer(2).weights[static_cast<size_t>(i)], 16);
        for (size_t j = 0; j < 4; ++j) {
            const float orig = m.layer(2).weights[static_cast<size_t>(i)].data[j];
            const float got = out.layer(2).weights[static_cast<size_t>(i)].data[j];
            const int64_t code = oracle_code(orig, p);
            CHECK(got == doctest::Approx(static_cast<double>(code) * p.scale).epsilon(1e-6));
        }
    }
}

TEST_CASE("apply_setting equals folded quantize_layer and validates totals") {
    NetworkModel m = test::make_mini_model(4);

    QuantSpec all32 = QuantSpec::uniform(m, 32);
    CHECK(models_bit_identical(m, apply_setting(m, all32)));

    QuantSpec one = QuantSpec::uniform(m, 32);
    one.assignment[2] = 8;
    NetworkModel via_spec = apply_setting(m, one);
    NetworkModel via_layer = quantize_layer(m, 2, 8);
    CHECK(models_bit_identical(via_spec, via_layer));
    CHECK(via_spec.precision_map == via_layer.precision_map);

    QuantSpec missing;
    missing.assignment = {{1, 8}, {2, 8}, {3, 8}}; // layer 4 absent
    CHECK_THROWS_AS(apply_setting(m, missing), Error);

    QuantSpec unknown = QuantSpec::uniform(m, 8);
    unknown.assignment[99] = 8;
    CHECK_THROWS_AS(apply_setting(m, unknown), Error);

    QuantSpec bad_bit = QuantSpec::uniform(m, 8);
    bad_bit.assignment[1] = 7;
    CHECK_THROWS_AS(apply_setting(m, bad_bit), Error);
}

TEST_CASE("quant spec documents round-trip and support block-level entries") {
    NetworkModel m = build_toy_model(ToyConfig{2, 16, 16, 1, 2, 1, 4, 4}, 9);

    QuantSpec spec = QuantSpec::uniform(m, 32, "manual");
    // reference final-setting shape: stage-1 per-block bits,
    // stage-3 downsampling at 4, attention blocks kept at 32
    std::map<std::string, int> block_bits = {
        {"DS_S1_B1", 8}, {"CONV_S1_B1", 4}, {"DS_S1_B2", 8}, {"CONV_S1_B2", 8},
        {"DS_S2", 8},    {"CONV_S2_B1", 4}, {"CONV_S2_B2", 8},
        {"DS_S3", 4},    {"DS_S4", 4}};
    for (const auto& ld : m.layers) {
        auto it = block_bits.find(ld.block_label);
        spec.assignment[ld.id] = it == block_bits.end() ? 32 : it->second;
    }

    const std::string text = quant_spec_to_json(spec, m);
    QuantSpec parsed = quant_spec_from_json(text, m);
    CHECK(parsed.assignment == spec.assignment);

    NetworkModel applied = apply_setting(m, parsed);
    CHECK(applied.precision_map == spec.assignment);

    // per-layer override entry
    const std::string mixed = R"({
      "schema": "svitq.quant_spec/1",
      "default": 32,
      "assignments": [
        {"block": "CONV_S1_B1", "bit": 8},
        {"block": "CONV_S1_B1", "layer": 2, "bit": 4}
      ]
    })";
    QuantSpec override_spec = quant_spec_from_json(mixed, m);
    int overridden = 0;
    for (const auto& ld : m.layers) {
        if (ld.block_label == "CONV_S1_B1") {
            if (ld.block_ordinal == 2) {
                CHECK(override_spec.assignment.at(ld.id) == 4);
                ++overridden;
            } else {
                CHECK(override_spec.assignment.at(ld.id) == 8);
            }
        } else {
            CHECK(override_spec.assignment.at(ld.id) == 32);
        }
    }
    CHECK(overridden == 1);

    CHECK_THROWS_AS(quant_spec_from_json(R"({"schema":"nope"})", m), Error);
    CHECK_THROWS_AS(
        quant_spec_from_json(
            R"({"schema":"svitq.quant_spec/1","assignments":[{"block":"NO_SUCH","bit":8}]})", m),
        Error);
}
