#include "pbcert/training_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pbcert/error.hpp"

namespace pbcert {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_double(const std::string& field, std::size_t line_no) {
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(x)) {
        throw InvalidArgument("line " + std::to_string(line_no) + ": bad number '" + field + "'");
    }
    return x;
}

int parse_label(const std::string& field, std::size_t line_no) {
    int y = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), y);
    if (ec != std::errc() || ptr != field.data() + field.size() || y < 0) {
        throw InvalidArgument("line " + std::to_string(line_no) + ": bad label '" + field + "'");
    }
    return y;
}

}  // namespace

LabelledDataset parse_csv_dataset(const std::string& text, std::optional<int> num_classes) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::size_t columns = 0;
    while (columns == 0 && std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        columns = split_csv_line(line).size();
    }
    if (columns < 2) throw InvalidArgument("CSV needs a header with at least one feature and a label column");

    std::vector<double> features;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != columns) {
            throw InvalidArgument("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                                  " columns");
        }
        for (std::size_t i = 0; i + 1 < columns; ++i) features.push_back(parse_double(fields[i], line_no));
        labels.push_back(parse_label(fields.back(), line_no));
    }
    if (labels.empty()) throw InvalidArgument("CSV has no data rows");
    const int inferred = std::max(2, *std::max_element(labels.begin(), labels.end()) + 1);
    return LabelledDataset(columns - 1, num_classes.value_or(inferred), std::move(features), std::move(labels));
}

LabelledDataset load_csv_dataset(const std::string& path, std::optional<int> num_classes) {
    return parse_csv_dataset(read_text_file(path), num_classes);
}

ErrorPartition parse_partition(const Json& config) {
    try {
        const int C = config.at("num_classes").get<int>();
        if (C < 2) throw InvalidArgument("num_classes must be >= 2");
        LossVector losses(config.at("losses").get<std::vector<double>>());
        if (config.value("fully_refined", false)) {
            if (config.contains("cells")) throw InvalidArgument("fully_refined and cells are exclusive");
            return ErrorPartition::fully_refined(C, std::move(losses));
        }

        std::vector<int> table(static_cast<std::size_t>(C) * C, -1);
        for (const Json& rule : config.at("cells")) {
            const int type = rule.at("type").get<int>();
            const Json& cells = rule.at("cells");
            auto assign = [&](int pred, int truth) {
                if (pred < 0 || pred >= C || truth < 0 || truth >= C) {
                    throw InvalidArgument("partition cell out of range");
                }
                table[static_cast<std::size_t>(pred) * C + truth] = type;
            };
            if (cells.is_string()) {
                const auto kind = cells.get<std::string>();
                if (kind != "diagonal" && kind != "off-diagonal") {
                    throw InvalidArgument("unknown cell class '" + kind + "'");
                }
                for (int pred = 0; pred < C; ++pred) {
                    for (int truth = 0; truth < C; ++truth) {
                        if ((pred == truth) == (kind == "diagonal")) assign(pred, truth);
                    }
                }
            } else {
                for (const Json& pair : cells) {
                    const auto pt = pair.get<std::vector<int>>();
                    if (pt.size() != 2) throw InvalidArgument("cells must be [predicted, true] pairs");
                    assign(pt[0], pt[1]);
                }
            }
        }
        if (std::find(table.begin(), table.end(), -1) != table.end()) {
            throw InvalidArgument("partition leaves some (predicted, true) cells unassigned");
        }
        return ErrorPartition(C, std::move(table), std::move(losses));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("partition config: ") + e.what());
    }
}

ErrorPartition load_partition(const std::string& path) {
    try {
        return parse_partition(Json::parse(read_text_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument("partition config: " + std::string(e.what()));
    }
}

TrainConfig parse_train_config(const Json& config) {
    static const std::set<std::string> known = {
        "epochs",      "learning_rate", "delta",        "mode",          "seed",
        "gradient_mode", "fd_step",     "prior_policy", "prior_split",   "prior_var",
        "prior_epochs", "prior_learning_rate", "init_var", "batch_size", "mc_draws",
        "smoothing_alpha", "certificate_samples"};
    if (!config.is_object()) throw InvalidArgument("training config must be a JSON object");
    for (const auto& [key, _] : config.items()) {
        if (!known.contains(key)) throw InvalidArgument("unknown training config key '" + key + "'");
    }
    try {
        TrainConfig c;
        c.epochs = config.value("epochs", c.epochs);
        c.learning_rate = config.value("learning_rate", c.learning_rate);
        c.delta = config.value("delta", c.delta);
        if (config.contains("mode")) c.mode = constant_mode_from_string(config["mode"].get<std::string>());
        c.seed = config.value("seed", c.seed);
        if (config.contains("gradient_mode")) {
            const auto g = config["gradient_mode"].get<std::string>();
            if (g == "analytic") {
                c.gradient_mode = GradientMode::Analytic;
            } else if (g == "finite-difference") {
                c.gradient_mode = GradientMode::FiniteDifference;
            } else {
                throw InvalidArgument("unknown gradient_mode '" + g + "'");
            }
        }
        c.fd_step = config.value("fd_step", c.fd_step);
        if (config.contains("prior_policy")) {
            const auto p = config["prior_policy"].get<std::string>();
            if (p == "fixed") {
                c.prior_policy = PriorPolicy::Fixed;
            } else if (p == "trained-on-prior-split") {
                c.prior_policy = PriorPolicy::TrainedOnPriorSplit;
            } else {
                throw InvalidArgument("unknown prior_policy '" + p + "'");
            }
        }
        c.prior_split = config.value("prior_split", c.prior_split);
        c.prior_var = config.value("prior_var", c.prior_var);
        c.prior_epochs = config.value("prior_epochs", c.prior_epochs);
        c.prior_learning_rate = config.value("prior_learning_rate", c.prior_learning_rate);
        if (config.contains("init_var") && !config["init_var"].is_null()) c.init_var = config["init_var"].get<double>();
        c.batch_size = config.value("batch_size", c.batch_size);
        c.mc_draws = config.value("mc_draws", c.mc_draws);
        if (config.contains("smoothing_alpha") && !config["smoothing_alpha"].is_null()) {
            c.smoothing_alpha = config["smoothing_alpha"].get<double>();
        }
        c.certificate_samples = config.value("certificate_samples", c.certificate_samples);
        if (c.mc_draws < 1) throw InvalidArgument("mc_draws must be >= 1");
        if (c.certificate_samples < 1) throw InvalidArgument("certificate_samples must be >= 1");
        if (!(c.fd_step > 0.0)) throw InvalidArgument("fd_step must be positive");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("training config: ") + e.what());
    }
}

TrainConfig load_train_config(const std::string& path) {
    try {
        return parse_train_config(Json::parse(read_text_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument("training config: " + std::string(e.what()));
    }
}

Json epoch_record_to_json(const EpochRecord& record) {
    const StepDiagnostics& d = record.last;
    Json j;
    j["epoch"] = record.epoch;
    j["steps"] = record.steps;
    j["u"] = d.u;
    j["kl_qp"] = d.kl_qp;
    j["budget"] = d.budget;
    j["f_star"] = d.f_star;
    j["lambda_star"] = d.lambda_star;
    j["grad_norm"] = d.grad_norm;
    j["skipped"] = d.skipped;
    j["smoothed"] = d.smoothed;
    return j;
}

std::string history_to_jsonl(const std::vector<EpochRecord>& history) {
    std::string out;
    for (const EpochRecord& r : history) {
        out += dump_json(epoch_record_to_json(r), -1);
        out += '\n';
    }
    return out;
}

Json posterior_to_json(const GaussianPosterior& q) {
    Json j;
    j["mean"] = q.mean;
    j["log_var"] = q.log_var;
    return j;
}

Json prior_to_json(const PriorSpec& p) {
    Json j;
    j["mean"] = p.mean;
    j["var"] = p.var;
    j["provenance"] = p.provenance == PriorProvenance::Fixed ? "fixed" : "trained-on-prior-split";
    return j;
}

Json train_result_to_json(const TrainResult& result) {
    Json j;
    j["posterior"] = posterior_to_json(result.posterior);
    j["prior"] = prior_to_json(result.prior);
    j["prior_rows"] = result.prior_rows.size();
    j["bound_rows"] = result.bound_rows.size();
    j["epochs"] = result.history.size();
    j["initial_certificate"] = certificate_to_json(result.initial_certificate);
    j["certificate"] = certificate_to_json(result.certificate);
    return j;
}

}  // namespace pbcert
