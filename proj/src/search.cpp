#include "svitq/search.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "svitq/error.hpp"
#include "svitq/report.hpp"

namespace svitq {

using json = nlohmann::ordered_json;

namespace {

void parallel_for(size_t count, int workers, const std::function<void(size_t)>& fn) {
    if (workers <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto body = [&] {
        try {
            for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!error) error = std::current_exception();
            next.store(count); // stop handing out work
        }
    };
    const size_t spawn = std::min<size_t>(static_cast<size_t>(workers) - 1, count - 1);
    std::vector<std::thread> threads;
    threads.reserve(spawn);
    for (size_t i = 0; i < spawn; ++i) threads.emplace_back(body);
    body();
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

void validate_bits(const std::vector<int>& bits) {
    if (bits.empty()) fail(ErrorCode::InvalidArgument, "bit axis must not be empty");
    for (int b : bits)
        if (!is_supported_bit(b))
            fail(ErrorCode::InvalidArgument, "unsupported bit in axis: " + std::to_string(b));
    for (size_t i = 0; i < bits.size(); ++i)
        for (size_t j = i + 1; j < bits.size(); ++j)
            if (bits[i] == bits[j]) fail(ErrorCode::InvalidArgument, "duplicate bit in axis");
}

QuantSpec spec_from_map(const std::map<int, int>& assignment, std::string provenance) {
    QuantSpec s;
    s.assignment = assignment;
    s.provenance = std::move(provenance);
    return s;
}

} // namespace

const SensitivityTable::Row& SensitivityTable::row(int layer_id) const {
    for (const auto& r : rows)
        if (r.layer_id == layer_id) return r;
    fail(ErrorCode::InvalidArgument, "sensitivity table has no layer " + std::to_string(layer_id));
}

double SensitivityTable::accuracy(int layer_id, int bit) const {
    const auto& r = row(layer_id);
    auto it = r.accuracy.find(bit);
    if (it == r.accuracy.end())
        fail(ErrorCode::InvalidArgument, "sensitivity table missing cell (" +
                                             std::to_string(layer_id) + ", " +
                                             std::to_string(bit) + ")");
    return it->second;
}

void SensitivityTable::check_complete() const {
    for (const auto& r : rows)
        for (int b : bits)
            if (!r.accuracy.count(b))
                fail(ErrorCode::Format, "sensitivity table incomplete: layer " +
                                            std::to_string(r.layer_id) + " missing bit " +
                                            std::to_string(b));
}

SensitivityTable layerwise_sweep(const NetworkModel& model, const Evaluator& evaluator,
                                 const SweepOptions& opts) {
    validate_bits(opts.bits);
    const auto layers = enumerate_quantizable_layers(model);

    SensitivityTable table;
    table.bits = opts.bits;
    for (const auto& li : layers)
        table.rows.push_back({li.id, li.block_label, li.block_ordinal, li.kind, {}});

    const bool axis_has_32 =
        std::find(opts.bits.begin(), opts.bits.end(), 32) != opts.bits.end();
    if (!axis_has_32) table.baseline_accuracy = evaluator(model);

    struct Cell {
        size_t row;
        int layer_id;
        int bit;
    };
    std::vector<Cell> cells;
    std::vector<double> results;
    for (size_t r = 0; r < layers.size(); ++r)
        for (int b : opts.bits) cells.push_back({r, layers[r].id, b});
    results.assign(cells.size(), 0.0);

    std::vector<size_t> pending;
    for (size_t i = 0; i < cells.size(); ++i) {
        auto it = opts.precomputed.find({cells[i].layer_id, cells[i].bit});
        if (it != opts.precomputed.end())
            results[i] = it->second;
        else
            pending.push_back(i);
    }

    std::mutex progress_mu;
    parallel_for(pending.size(), opts.workers, [&](size_t pi) {
        const size_t i = pending[pi];
        const Cell& cell = cells[i];
        double acc;
        try {
            const NetworkModel candidate =
                quantize_layer(model, cell.layer_id, cell.bit, opts.mode);
            acc = evaluator(candidate);
        } catch (const Error& e) {
            throw Error(e.code(), "sweep cell (layer " + std::to_string(cell.layer_id) +
                                      ", bit " + std::to_string(cell.bit) + "): " + e.what());
        }
        results[i] = acc;
        if (opts.on_cell) {
            std::lock_guard<std::mutex> lock(progress_mu);
            opts.on_cell(cell.layer_id, cell.bit, acc);
        }
    });

    for (size_t i = 0; i < cells.size(); ++i)
        table.rows[cells[i].row].accuracy[cells[i].bit] = results[i];

    if (axis_has_32) {
        table.baseline_accuracy = table.rows.empty() ? evaluator(model)
                                                     : table.rows.front().accuracy.at(32);
        for (const auto& r : table.rows)
            if (r.accuracy.at(32) != table.baseline_accuracy)
                fail(ErrorCode::Internal, "32-bit sweep cells disagree; evaluator is not "
                                          "deterministic");
    }
    table.check_complete();
    return table;
}

BaseSettings select_base_settings(const SensitivityTable& table, const ThresholdPolicy& policy) {
    if (policy.delta <= 0) fail(ErrorCode::InvalidArgument, "threshold delta must be > 0");
    table.check_complete();
    const double threshold = policy.threshold(table.baseline_accuracy);

    BaseSettings base;
    for (const auto& r : table.rows) {
        int high = 0, low = 0;
        for (const auto& [bit, acc] : r.accuracy) {
            if (acc < threshold) continue;
            if (is_reduced_bit(bit) && bit > high) high = bit;
            if (low == 0 || bit < low) low = bit;
        }
        // A layer with no qualifying reduced precision is quantization
        // sensitive and stays at 32.
        if (high == 0) high = 32;
        if (low == 0 || low > high) low = high;
        base.high[r.layer_id] = high;
        base.low[r.layer_id] = low;
    }
    return base;
}

namespace {

std::vector<int> candidate_bits(int high, int low) {
    std::vector<int> bits;
    if (high == 32) return {32};
    for (int b = high; b >= low; b -= 4) bits.push_back(b);
    return bits;
}

} // namespace

GuidedResult guided_explore(const NetworkModel& model, const Evaluator& evaluator,
                            const BaseSettings& base, const ThresholdPolicy& policy,
                            QuantMode mode, int workers) {
    for (const auto& ld : model.layers) {
        if (!base.high.count(ld.id) || !base.low.count(ld.id))
            fail(ErrorCode::InvalidArgument,
                 "base settings missing layer " + std::to_string(ld.id));
        if (base.low.at(ld.id) > base.high.at(ld.id))
            fail(ErrorCode::InvalidArgument,
                 "base settings have low > high at layer " + std::to_string(ld.id));
    }

    GuidedResult result;
    result.baseline_accuracy = evaluator(model);
    const double threshold = policy.threshold(result.baseline_accuracy);

    struct Cell {
        int layer_id;
        int bit;
    };
    std::vector<Cell> cells;
    for (const auto& ld : model.layers)
        for (int b : candidate_bits(base.high.at(ld.id), base.low.at(ld.id)))
            cells.push_back({ld.id, b});

    std::vector<double> acc(cells.size(), 0.0);
    parallel_for(cells.size(), workers, [&](size_t i) {
        const NetworkModel candidate = quantize_layer(model, cells[i].layer_id, cells[i].bit, mode);
        acc[i] = evaluator(candidate);
    });

    // lowest qualifying candidate per layer; high if none qualifies
    std::map<int, int> selected;
    for (const auto& ld : model.layers) selected[ld.id] = base.high.at(ld.id);
    for (size_t i = 0; i < cells.size(); ++i) {
        if (acc[i] < threshold) continue;
        const int l = cells[i].layer_id;
        if (cells[i].bit <= selected[l]) {
            selected[l] = cells[i].bit;
            result.stored_accuracy[l] = acc[i];
        }
    }
    result.spec = spec_from_map(selected, "guided");
    return result;
}

CompositeResult explore_composite(const NetworkModel& model, const Evaluator& evaluator,
                                  const BaseSettings& base, const ThresholdPolicy& policy,
                                  const CompositeStrategy& strategy, QuantMode mode,
                                  int workers) {
    for (const auto& ld : model.layers)
        if (!base.high.count(ld.id) || !base.low.count(ld.id))
            fail(ErrorCode::InvalidArgument,
                 "base settings missing layer " + std::to_string(ld.id));

    CompositeResult result;
    result.baseline_accuracy = evaluator(model);
    const double threshold = policy.threshold(result.baseline_accuracy);

    struct Pending {
        std::string name;
        std::map<int, int> assignment;
    };
    std::vector<Pending> pending;
    std::map<std::map<int, int>, size_t> seen;
    auto push = [&](std::string name, std::map<int, int> assignment) {
        if (seen.count(assignment)) return;
        seen[assignment] = pending.size();
        pending.push_back({std::move(name), std::move(assignment)});
    };

    push("bSettingH", base.high);
    push("bSettingL", base.low);
    int exp_no = 1;
    if (strategy.single_layer_perturbations) {
        for (const auto& ld : model.layers) {
            const int high = base.high.at(ld.id);
            const int low = base.low.at(ld.id);
            if (high == 32 || high == low) continue;
            for (int b = high - 4; b >= low; b -= 4) {
                std::map<int, int> a = base.high;
                a[ld.id] = b;
                push("ExpSetting" + std::to_string(exp_no++), std::move(a));
            }
        }
    }
    for (const auto& [name, spec] : strategy.extra_candidates) push(name, spec.assignment);

    std::vector<double> acc(pending.size(), 0.0);
    parallel_for(pending.size(), workers, [&](size_t i) {
        const NetworkModel candidate =
            apply_setting(model, spec_from_map(pending[i].assignment, "composite"), mode);
        acc[i] = evaluator(candidate);
    });

    std::vector<CompositeCandidate> candidates;
    for (size_t i = 0; i < pending.size(); ++i) {
        CompositeCandidate c;
        c.name = pending[i].name;
        c.spec = spec_from_map(pending[i].assignment, "composite");
        c.accuracy = acc[i];
        c.footprint_bytes = footprint_bytes(model, c.spec).total_bytes;
        c.qualifies = acc[i] >= threshold;
        candidates.push_back(std::move(c));
    }

    // per layer, the lowest precision seen in any qualifying setting
    std::map<int, int> selected = base.high;
    for (const auto& c : candidates) {
        if (!c.qualifies) continue;
        for (const auto& [id, bit] : c.spec.assignment)
            selected[id] = std::min(selected[id], bit);
    }

    // single-layer accuracy lookup used to pick repair order
    std::map<std::pair<int, int>, double> pert_acc;
    for (const auto& c : candidates) {
        std::vector<int> changed;
        for (const auto& [id, bit] : c.spec.assignment)
            if (bit != base.high.at(id)) changed.push_back(id);
        if (changed.size() == 1)
            pert_acc[{changed[0], c.spec.assignment.at(changed[0])}] = c.accuracy;
    }

    auto eval_assignment = [&](const std::map<int, int>& a) {
        auto it = seen.find(a);
        if (it != seen.end()) return acc[it->second];
        return evaluator(apply_setting(model, spec_from_map(a, "composite"), mode));
    };

    double sel_acc = eval_assignment(selected);
    {
        CompositeCandidate c;
        c.name = "Selected";
        c.spec = spec_from_map(selected, "composite");
        c.accuracy = sel_acc;
        c.footprint_bytes = footprint_bytes(model, c.spec).total_bytes;
        c.qualifies = sel_acc >= threshold;
        candidates.push_back(std::move(c));
    }

    // If the combined selection misses the threshold, raise the worst
    // offending layer back to its high setting until it passes.
    int repair_no = 1;
    while (sel_acc < threshold && selected != base.high) {
        int worst_layer = 0;
        double worst_acc = 0.0;
        for (const auto& [id, bit] : selected) {
            if (bit >= base.high.at(id)) continue;
            auto it = pert_acc.find({id, bit});
            const double a = it == pert_acc.end() ? -1.0 : it->second;
            if (worst_layer == 0 || a < worst_acc) {
                worst_layer = id;
                worst_acc = a;
            }
        }
        if (worst_layer == 0) break;
        selected[worst_layer] = base.high.at(worst_layer);
        sel_acc = eval_assignment(selected);
        CompositeCandidate c;
        c.name = "Repair" + std::to_string(repair_no++);
        c.spec = spec_from_map(selected, "composite");
        c.accuracy = sel_acc;
        c.footprint_bytes = footprint_bytes(model, c.spec).total_bytes;
        c.qualifies = sel_acc >= threshold;
        candidates.push_back(std::move(c));
    }

    std::vector<size_t> order(candidates.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const auto& ca = candidates[a];
        const auto& cb = candidates[b];
        if (ca.qualifies != cb.qualifies) return ca.qualifies;
        if (ca.footprint_bytes != cb.footprint_bytes)
            return ca.footprint_bytes < cb.footprint_bytes;
        if (ca.accuracy != cb.accuracy) return ca.accuracy > cb.accuracy;
        return a < b;
    });
    for (size_t i : order) result.ranked.push_back(candidates[i]);

    result.selected = spec_from_map(selected, "composite");
    result.selected_accuracy = sel_acc;
    result.selected_qualifies = sel_acc >= threshold;
    return result;
}

BuildResult build_quantized(const NetworkModel& model, const QuantSpec& spec,
                            const Evaluator& evaluator, const ThresholdPolicy& policy,
                            QuantMode mode) {
    BuildResult result;
    result.baseline_accuracy = evaluator(model);
    result.model = apply_setting(model, spec, mode);
    result.accuracy = evaluator(result.model);
    result.below_threshold = result.accuracy < policy.threshold(result.baseline_accuracy);
    return result;
}

std::string sensitivity_table_to_json(const SensitivityTable& table) {
    json doc;
    doc["schema"] = "svitq.sensitivity/1";
    doc["bits"] = table.bits;
    doc["baseline_accuracy"] = table.baseline_accuracy;
    json rows = json::array();
    for (const auto& r : table.rows) {
        json acc = json::object();
        for (int b : table.bits) acc[std::to_string(b)] = r.accuracy.at(b);
        rows.push_back({{"id", r.layer_id},
                        {"block", r.block_label},
                        {"layer", r.block_ordinal},
                        {"kind", layer_kind_name(r.kind)},
                        {"accuracy", std::move(acc)}});
    }
    doc["rows"] = std::move(rows);
    return doc.dump(2) + "\n";
}

SensitivityTable sensitivity_table_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const std::exception& e) {
        fail(ErrorCode::Format, std::string("sensitivity table is not valid JSON: ") + e.what());
    }
    if (doc.value("schema", "") != "svitq.sensitivity/1")
        fail(ErrorCode::Format, "unsupported sensitivity table schema");
    SensitivityTable table;
    table.bits = doc.at("bits").get<std::vector<int>>();
    table.baseline_accuracy = doc.at("baseline_accuracy").get<double>();
    for (const auto& r : doc.at("rows")) {
        SensitivityTable::Row row;
        row.layer_id = r.at("id").get<int>();
        row.block_label = r.at("block").get<std::string>();
        row.block_ordinal = r.at("layer").get<int>();
        row.kind = layer_kind_from_name(r.at("kind").get<std::string>());
        for (const auto& [key, val] : r.at("accuracy").items())
            row.accuracy[std::stoi(key)] = val.get<double>();
        table.rows.push_back(std::move(row));
    }
    table.check_complete();
    return table;
}

std::string base_settings_to_json(const BaseSettings& base, const NetworkModel& model) {
    json doc;
    doc["schema"] = "svitq.base_settings/1";
    json layers = json::array();
    for (const auto& ld : model.layers) {
        if (!base.high.count(ld.id) || !base.low.count(ld.id))
            fail(ErrorCode::InvalidArgument,
                 "base settings missing layer " + std::to_string(ld.id));
        layers.push_back({{"id", ld.id},
                          {"block", ld.block_label},
                          {"layer", ld.block_ordinal},
                          {"high", base.high.at(ld.id)},
                          {"low", base.low.at(ld.id)}});
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2) + "\n";
}

BaseSettings base_settings_from_json(const std::string& text, const NetworkModel& model) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const std::exception& e) {
        fail(ErrorCode::Format, std::string("base settings are not valid JSON: ") + e.what());
    }
    if (doc.value("schema", "") != "svitq.base_settings/1")
        fail(ErrorCode::Format, "unsupported base settings schema");
    BaseSettings base;
    for (const auto& entry : doc.at("layers")) {
        const int id = entry.at("id").get<int>();
        if (!model.has_layer(id))
            fail(ErrorCode::Format, "base settings name unknown layer " + std::to_string(id));
        base.high[id] = entry.at("high").get<int>();
        base.low[id] = entry.at("low").get<int>();
    }
    for (const auto& ld : model.layers)
        if (!base.high.count(ld.id))
            fail(ErrorCode::Format, "base settings missing layer " + std::to_string(ld.id));
    return base;
}

} // namespace svitq
