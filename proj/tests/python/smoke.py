"""Smoke tests for the svitq extension module."""

import math
import os
import tempfile

import svitq


def test_quant_math():
    assert svitq.quant_range(8) == (-128, 127)
    assert svitq.quant_range(4) == (-8, 7)
    assert svitq.quant_range(16) == (-32768, 32767)

    q = svitq.quantize([-1.0, 0.0, 1.0], 8)
    assert list(q.codes) == [-128, 0, 127]
    assert math.isclose(q.params.scale, 2.0 / 255.0, rel_tol=1e-12)
    back = svitq.dequantize(q)
    assert math.isclose(back[0], -128 * 2.0 / 255.0, abs_tol=1e-6)
    assert back[1] == 0.0

    p = svitq.compute_scale([0.0, 0.0], 8)
    assert p.degenerate


def test_toy_model():
    cfg = svitq.ToyConfig()
    cfg.base_channels = 8
    cfg.input_h = cfg.input_w = 32
    cfg.tran_blocks_s3 = 2
    cfg.tran_blocks_s4 = 1
    cfg.classes = 10
    cfg.timesteps = 4
    model = svitq.build_toy_model(cfg, seed=1)
    assert model.layer_count == 46
    assert model.timesteps == 4
    assert all(bit == 32 for bit in model.precision_map.values())

    kinds = {}
    for layer in model.layers():
        kinds[layer["kind"]] = kinds.get(layer["kind"], 0) + 1
    assert kinds["sdsa"] == 3  # one per transformer block
    assert kinds["repconv"] == 12


def test_quantize_and_footprint():
    cfg = svitq.ToyConfig()
    cfg.base_channels = 4
    cfg.input_h = cfg.input_w = 16
    cfg.tran_blocks_s3 = cfg.tran_blocks_s4 = 1
    cfg.classes = 4
    model = svitq.build_toy_model(cfg, seed=2)

    q = svitq.quantize_layer(model, 1, 8)
    assert q.precision_map[1] == 8

    uniform8 = {layer["id"]: 8 for layer in model.layers()}
    q8 = svitq.apply_setting(model, uniform8)
    fp = svitq.footprint(q8)
    assert fp["saving_percent"] > 70.0

    assert svitq.bytes_for(1000, 8) == 1000
    assert math.isclose(svitq.to_mib(svitq.bytes_for(55_400_000, 32)), 211.33, abs_tol=0.01)
    assert abs(svitq.saving_percent(211.0, 163.0) - 22.75) < 0.1


def test_eval_round_trip():
    cfg = svitq.ToyConfig()
    cfg.base_channels = 4
    cfg.input_h = cfg.input_w = 16
    cfg.tran_blocks_s3 = cfg.tran_blocks_s4 = 1
    cfg.classes = 4
    model = svitq.build_toy_model(cfg, seed=3)
    data = svitq.generate_synthetic(4, 32, 4)
    acc1 = svitq.evaluate(model, data)
    acc2 = svitq.evaluate(model, data)
    assert acc1 == acc2

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.qsvc")
        svitq.save_checkpoint(model, path, "smoke")
        loaded = svitq.load_checkpoint(path)
        assert svitq.evaluate(loaded, data) == acc1


def test_base_settings_from_table():
    table_json = """{
      "schema": "svitq.sensitivity/1",
      "bits": [32, 16, 12, 8, 4],
      "baseline_accuracy": 90.0,
      "rows": [
        {"id": 1, "block": "L1", "layer": 1, "kind": "conv",
         "accuracy": {"32": 90.0, "16": 89.0, "12": 88.0, "8": 84.0, "4": 60.0}}
      ]
    }"""
    table = svitq.sensitivity_table_from_json(table_json)
    high, low = svitq.select_base_settings(table, delta=5.0)
    assert high[1] == 16
    assert low[1] == 12  # 84 sits below the 85-point threshold


def test_search_with_python_evaluator():
    cfg = svitq.ToyConfig()
    cfg.base_channels = 2
    cfg.input_h = cfg.input_w = 16
    cfg.tran_blocks_s3 = 1
    cfg.tran_blocks_s4 = 0
    cfg.classes = 2
    cfg.timesteps = 1
    model = svitq.build_toy_model(cfg, seed=6)

    # scripted evaluator keyed on the candidate's precision map
    def evaluator(candidate):
        acc = 90.0
        for layer_id, bit in candidate.precision_map.items():
            if bit != 32:
                acc = min(acc, 80.0 + bit / 2.0)  # lower bits look worse
        return acc

    table = svitq.layerwise_sweep(model, evaluator, bits=[32, 16, 8])
    assert table.baseline_accuracy == 90.0
    assert table.accuracy(1, 8) == 84.0

    high, low = svitq.select_base_settings(table, delta=5.0)
    assert all(bit == 16 for bit in high.values())  # 88 qualifies, 84 does not
    assert all(bit == 16 for bit in low.values())

    selected, baseline = svitq.guided_explore(model, evaluator, high, low, delta=5.0)
    assert baseline == 90.0
    assert selected == high

    quantized, acc, warned = svitq.build_quantized(model, selected, evaluator)
    assert acc == 88.0 and not warned


def main():
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
    print("python smoke tests passed")


if __name__ == "__main__":
    main()
