#include "svitq/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "svitq/digest.hpp"
#include "svitq/error.hpp"

namespace svitq {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

long to_long(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        fail(ErrorCode::Config, "config key " + key + " expects an integer, got '" + value + "'");
    }
}

double to_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        fail(ErrorCode::Config, "config key " + key + " expects a number, got '" + value + "'");
    }
}

std::vector<int> to_bits(const std::string& key, const std::string& value) {
    std::vector<int> bits;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) bits.push_back(static_cast<int>(to_long(key, item)));
    }
    return bits;
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::Config,
                 "config line " + std::to_string(line_no) + " is not 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "seed") cfg.seed = static_cast<uint64_t>(to_long(key, value));
        else if (key == "output_dir") cfg.output_dir = value;
        else if (key == "mode") cfg.mode = quant_mode_from_name(value);
        else if (key == "delta") cfg.delta = to_double(key, value);
        else if (key == "bits") cfg.bits = to_bits(key, value);
        else if (key == "workers") cfg.workers = static_cast<int>(to_long(key, value));
        else if (key == "model.checkpoint") cfg.model_checkpoint = value;
        else if (key == "model.C") cfg.model.base_channels = static_cast<int>(to_long(key, value));
        else if (key == "model.H") cfg.model.input_h = static_cast<int>(to_long(key, value));
        else if (key == "model.W") cfg.model.input_w = static_cast<int>(to_long(key, value));
        else if (key == "model.in_channels")
            cfg.model.in_channels = static_cast<int>(to_long(key, value));
        else if (key == "model.N3")
            cfg.model.tran_blocks_s3 = static_cast<int>(to_long(key, value));
        else if (key == "model.N4")
            cfg.model.tran_blocks_s4 = static_cast<int>(to_long(key, value));
        else if (key == "model.classes") cfg.model.classes = static_cast<int>(to_long(key, value));
        else if (key == "model.T") cfg.model.timesteps = static_cast<int>(to_long(key, value));
        else if (key == "data.kind") cfg.data_kind = value;
        else if (key == "data.classes") cfg.data_classes = static_cast<int>(to_long(key, value));
        else if (key == "data.H") cfg.data_h = static_cast<int>(to_long(key, value));
        else if (key == "data.W") cfg.data_w = static_cast<int>(to_long(key, value));
        else if (key == "data.train_n") cfg.train_n = static_cast<size_t>(to_long(key, value));
        else if (key == "data.val_n") cfg.val_n = static_cast<size_t>(to_long(key, value));
        else if (key == "data.noise") cfg.data_noise = to_double(key, value);
        else if (key == "data.idx_train_images") cfg.idx_train_images = value;
        else if (key == "data.idx_train_labels") cfg.idx_train_labels = value;
        else if (key == "data.idx_val_images") cfg.idx_val_images = value;
        else if (key == "data.idx_val_labels") cfg.idx_val_labels = value;
        else if (key == "subset.size") cfg.subset_size = static_cast<size_t>(to_long(key, value));
        else if (key == "subset.seed") cfg.subset_seed = static_cast<uint64_t>(to_long(key, value));
        else if (key == "train.epochs") cfg.train_epochs = static_cast<int>(to_long(key, value));
        else if (key == "train.batch") cfg.train_batch = static_cast<int>(to_long(key, value));
        else if (key == "train.lr") cfg.train_lr = to_double(key, value);
        else fail(ErrorCode::Config, "unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Config, "config file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void RunConfig::validate() const {
    if (delta <= 0) fail(ErrorCode::Config, "delta must be > 0 (accuracy percentage points)");
    if (bits.empty()) fail(ErrorCode::Config, "bits axis must not be empty");
    for (int b : bits)
        if (!is_supported_bit(b))
            fail(ErrorCode::Config, "bits axis entry not in {32,16,12,8,4}: " + std::to_string(b));
    if (workers < 1) fail(ErrorCode::Config, "workers must be >= 1");
    if (data_kind != "synthetic" && data_kind != "idx")
        fail(ErrorCode::Config, "data.kind must be synthetic or idx");
    if (data_kind == "idx" &&
        (idx_train_images.empty() || idx_train_labels.empty() || idx_val_images.empty() ||
         idx_val_labels.empty()))
        fail(ErrorCode::Config, "data.kind=idx requires all four data.idx_* paths");
    if (train_epochs < 0) fail(ErrorCode::Config, "train.epochs must be >= 0");
    if (train_batch < 1) fail(ErrorCode::Config, "train.batch must be >= 1");
    if (output_dir.empty()) fail(ErrorCode::Config, "output_dir must not be empty");
}

std::string RunConfig::echo() const {
    std::ostringstream out;
    out << "seed = " << seed << "\n";
    out << "output_dir = " << output_dir << "\n";
    out << "mode = " << quant_mode_name(mode) << "\n";
    out << "delta = " << delta << "  # accuracy percentage points\n";
    out << "bits = ";
    for (size_t i = 0; i < bits.size(); ++i) out << (i ? "," : "") << bits[i];
    out << "\n";
    out << "workers = " << workers << "\n";
    if (!model_checkpoint.empty()) {
        out << "model.checkpoint = " << model_checkpoint << "\n";
    } else {
        out << "model.C = " << model.base_channels << "\n";
        out << "model.H = " << model.input_h << "  # pixels\n";
        out << "model.W = " << model.input_w << "  # pixels\n";
        out << "model.in_channels = " << model.in_channels << "\n";
        out << "model.N3 = " << model.tran_blocks_s3 << "\n";
        out << "model.N4 = " << model.tran_blocks_s4 << "\n";
        out << "model.classes = " << model.classes << "\n";
        out << "model.T = " << model.timesteps << "  # timesteps\n";
    }
    out << "data.kind = " << data_kind << "\n";
    if (data_kind == "synthetic") {
        out << "data.classes = " << data_classes << "\n";
        out << "data.H = " << data_h << "  # pixels\n";
        out << "data.W = " << data_w << "  # pixels\n";
        out << "data.train_n = " << train_n << "  # samples\n";
        out << "data.val_n = " << val_n << "  # samples\n";
        out << "data.noise = " << data_noise << "\n";
    } else {
        out << "data.classes = " << data_classes << "\n";
        out << "data.idx_train_images = " << idx_train_images << "\n";
        out << "data.idx_train_labels = " << idx_train_labels << "\n";
        out << "data.idx_val_images = " << idx_val_images << "\n";
        out << "data.idx_val_labels = " << idx_val_labels << "\n";
    }
    out << "subset.size = " << subset_size << "  # samples, 0 = full validation set\n";
    out << "subset.seed = " << subset_seed << "\n";
    out << "train.epochs = " << train_epochs << "\n";
    out << "train.batch = " << train_batch << "\n";
    out << "train.lr = " << train_lr << "\n";
    return out.str();
}

std::string RunConfig::digest() const {
    // output_dir does not change what is computed, only where it lands
    std::string text;
    std::istringstream in(echo());
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("output_dir", 0) == 0 || line.rfind("workers", 0) == 0) continue;
        text += line;
        text += '\n';
    }
    return digest_hex(text);
}

RunConfig apply_overrides(RunConfig cfg, const ConfigOverrides& ov) {
    if (ov.output_dir) cfg.output_dir = *ov.output_dir;
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.workers) cfg.workers = *ov.workers;
    if (ov.subset_size) cfg.subset_size = *ov.subset_size;
    if (ov.delta) cfg.delta = *ov.delta;
    if (ov.mode) cfg.mode = *ov.mode;
    cfg.validate();
    return cfg;
}

} // namespace svitq
