// pbcert: PAC-Bayes certificates for error-type risk vectors.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pbcert/constants.hpp"
#include "pbcert/error.hpp"
#include "pbcert/json_format.hpp"
#include "pbcert/kl_inverse.hpp"
#include "pbcert/risk_bounds.hpp"
#include "pbcert/training.hpp"
#include "pbcert/training_io.hpp"
#include "pbcert/verify.hpp"

namespace {

using namespace pbcert;

enum Exit : int { kOk = 0, kMalformed = 1, kInfeasible = 2, kBoundary = 3, kVerifyFailed = 4 };

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find_first_of(", \t\n\r", start);
        if (end == std::string::npos) end = text.size();
        if (end > start) {
            double x = 0.0;
            const char* first = text.data() + start;
            const char* last = text.data() + end;
            const auto [ptr, ec] = std::from_chars(first, last, x);
            if (ec != std::errc() || ptr != last) {
                throw InvalidArgument(std::string("bad number in ") + what + ": '" + std::string(first, last) + "'");
            }
            out.push_back(x);
        }
        start = end + 1;
    }
    if (out.empty()) throw InvalidArgument(std::string(what) + " is empty");
    return out;
}

// --risks is either a comma list of probabilities or a file of per-type counts.
SimplexVector read_risks(const std::string& arg, int m) {
    if (!std::filesystem::is_regular_file(arg)) return SimplexVector(parse_list(arg, "--risks"));
    const std::vector<double> counts = parse_list(read_text_file(arg), "counts file");
    double total = 0.0;
    for (double c : counts) {
        if (c < 0.0 || c != std::floor(c)) throw InvalidArgument("counts must be nonnegative integers");
        total += c;
    }
    if (total != m) throw InvalidArgument("counts in '" + arg + "' sum to " + std::to_string(total) + ", not m");
    std::vector<double> risks(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j) risks[j] = counts[j] / total;
    return SimplexVector(std::move(risks));
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write '" + out_path + "'");
    out << text << '\n';
}

std::pair<int, int> parse_range(const std::string& text, const char* what) {
    const auto colon = text.find(':');
    auto parse_int = [&](std::string_view s) {
        int v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            throw InvalidArgument(std::string("bad range for ") + what + ": '" + text + "'");
        }
        return v;
    };
    if (colon == std::string::npos) {
        const int v = parse_int(text);
        return {v, v};
    }
    const int a = parse_int(std::string_view(text).substr(0, colon));
    const int b = parse_int(std::string_view(text).substr(colon + 1));
    if (a > b) throw InvalidArgument(std::string("empty range for ") + what);
    return {a, b};
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------

struct BoundArgs {
    std::string risks;
    int m = 0;
    double delta = 0.0;
    double kl = 0.0;
    std::string mode = "auto";
    std::string losses;
    std::optional<double> smooth;
    double tol = kDefaultKlInverseTol;
    bool bits = false;
    std::string out;
};

int run_bound(const BoundArgs& a) {
    const PacBayesInputs inputs{.m = a.m, .delta = a.delta, .kl_qp = a.kl, .empirical_risk = read_risks(a.risks, a.m)};
    inputs.validate();
    ConstantMode mode = ConstantMode::Exact;
    if (a.mode == "auto") {
        mode = exact_feasible(a.m, inputs.num_types()) ? ConstantMode::Exact : ConstantMode::Stirling;
        if (mode == ConstantMode::Stirling) {
            std::cerr << "warning: exact enumeration of " << composition_count(a.m, inputs.num_types())
                      << " compositions exceeds the limit; using the Stirling form\n";
        }
    } else {
        mode = constant_mode_from_string(a.mode);
    }
    CertificateOptions options;
    if (!a.losses.empty()) options.losses = LossVector(parse_list(a.losses, "--losses"));
    options.smoothing_alpha = a.smooth;
    options.tol = a.tol;

    const BoundCertificate cert = build_certificate(inputs, mode, options);
    Json j = certificate_to_json(cert);
    if (a.bits) j["budget_bits"] = cert.budget / std::log(2.0);
    emit(dump_json(j), a.out);
    return kOk;
}

struct KlinvArgs {
    std::string u;
    double c = 0.0;
    std::string losses;
    double tol = kDefaultKlInverseTol;
};

int run_klinv(const KlinvArgs& a) {
    const SimplexVector u(parse_list(a.u, "--u"));
    const LossVector l(parse_list(a.losses, "--losses"));
    const TiltedSolution sol = kl_inverse_total(u, a.c, l, a.tol);
    Json j;
    j["u"] = u.vec();
    j["c"] = a.c;
    j["losses"] = l.vec();
    j["f_star"] = sol.f_star;
    j["v_star"] = sol.v_star.vec();
    j["mu_star"] = sol.mu_star;
    j["lambda_star"] = sol.lambda_star;
    j["grad_u"] = sol.grad_u;
    j["grad_c"] = sol.grad_c;
    j["phi_residual"] = sol.phi_residual;
    j["iterations"] = sol.iterations;
    j["one_sided_limit"] = sol.one_sided_limit;
    j["tolerance"] = a.tol;
    std::cout << dump_json(j) << '\n';
    return kOk;
}

struct ConstantsArgs {
    std::string m_range;
    std::string M_range;
    bool json = false;
};

int run_constants(const ConstantsArgs& a) {
    const auto [m_lo, m_hi] = parse_range(a.m_range, "--m-range");
    const auto [M_lo, M_hi] = parse_range(a.M_range, "--M-range");
    if (m_lo < 1 || M_lo < 2) throw InvalidArgument("ranges need m >= 1 and M >= 2");

    Json rows = Json::array();
    std::ostringstream tsv;
    tsv << "m\tM\texact\tstirling\tenumeration_size\n";
    for (int M = M_lo; M <= M_hi; ++M) {
        for (int m = m_lo; m <= m_hi; ++m) {
            std::optional<double> exact;
            std::optional<double> stirling;
            if (exact_feasible(m, M)) exact = log_I_kl_exact(m, M);
            if (m >= M) stirling = log_I_kl_stirling(m, M);
            const std::uint64_t count = composition_count(m, M);
            Json r;
            r["m"] = m;
            r["M"] = M;
            r["log_I_exact"] = exact ? Json(*exact) : Json(nullptr);
            r["log_I_stirling"] = stirling ? Json(*stirling) : Json(nullptr);
            r["enumeration_size"] = count;
            rows.push_back(r);
            tsv << m << '\t' << M << '\t' << (exact ? format_double(*exact) : "NA") << '\t'
                << (stirling ? format_double(*stirling) : "NA") << '\t' << count << '\n';
        }
    }
    if (a.json) {
        std::cout << dump_json(rows) << '\n';
    } else {
        std::cout << tsv.str();
    }
    return kOk;
}

struct TrainArgs {
    std::string data;
    std::string partition;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int run_train(const TrainArgs& a) {
    const ErrorPartition part = load_partition(a.partition);
    const LabelledDataset data = load_csv_dataset(a.data, part.num_classes());
    TrainConfig config = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
    if (a.seed) config.seed = *a.seed;

    const TrainResult result = train(data, part, config);
    Json j = train_result_to_json(result);
    if (a.out.empty()) {
        Json history = Json::array();
        for (const EpochRecord& r : result.history) history.push_back(epoch_record_to_json(r));
        j["history"] = history;
        std::cout << dump_json(j) << '\n';
        return kOk;
    }
    std::filesystem::create_directories(a.out);
    const std::filesystem::path dir(a.out);
    emit(dump_json(j), (dir / "result.json").string());
    emit(certificate_to_string(result.certificate), (dir / "certificate.json").string());
    std::ofstream hist(dir / "history.jsonl", std::ios::binary);
    if (!hist) throw InvalidArgument("cannot write history under '" + a.out + "'");
    hist << history_to_jsonl(result.history);
    std::cout << certificate_to_string(result.certificate) << '\n';
    return kOk;
}

struct VerifyArgs {
    std::string suite = "all";
    std::uint64_t seed = 0;
    std::string out;
};

int run_verify(const VerifyArgs& a) {
    const Json report = verification_report(a.suite, a.seed);
    emit(dump_json(report), a.out);
    return report.at("pass").get<bool>() ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PAC-Bayes certificates for error-type risk vectors"};
    app.require_subcommand(1);

    BoundArgs bound;
    auto* cmd_bound = app.add_subcommand("bound", "Certificate for an empirical risk vector");
    cmd_bound->add_option("--risks", bound.risks, "Comma list of per-type risks, or a file of per-type counts")
        ->required();
    cmd_bound->add_option("--m", bound.m, "Number of samples")->required();
    cmd_bound->add_option("--delta", bound.delta, "Confidence parameter in (0,1]")->required();
    cmd_bound->add_option("--kl", bound.kl, "KL(Q||P) in nats")->required();
    cmd_bound->add_option("--mode", bound.mode, "Constant form")
        ->check(CLI::IsMember({"exact", "stirling", "auto"}))
        ->capture_default_str();
    cmd_bound->add_option("--losses", bound.losses, "Comma list of per-type losses");
    cmd_bound->add_option("--smooth", bound.smooth, "Pseudo-count for boundary risk vectors");
    cmd_bound->add_option("--tol", bound.tol, "Root tolerance")->capture_default_str();
    cmd_bound->add_flag("--bits", bound.bits, "Also report the budget in bits");
    cmd_bound->add_option("--out", bound.out, "Write the certificate here instead of stdout");

    KlinvArgs klinv;
    auto* cmd_klinv = app.add_subcommand("klinv", "Solve max l.v subject to kl(u||v) <= c");
    cmd_klinv->add_option("--u", klinv.u, "Comma list, interior point of the simplex")->required();
    cmd_klinv->add_option("--c", klinv.c, "kl budget in nats")->required();
    cmd_klinv->add_option("--losses", klinv.losses, "Comma list of losses")->required();
    cmd_klinv->add_option("--tol", klinv.tol, "Root tolerance")->capture_default_str();

    ConstantsArgs constants;
    auto* cmd_constants = app.add_subcommand("constants", "Table of ln I_kl(m, M)");
    cmd_constants->add_option("--m-range", constants.m_range, "a:b")->required();
    cmd_constants->add_option("--M-range", constants.M_range, "a:b")->required();
    cmd_constants->add_flag("--json", constants.json, "JSON instead of TSV");

    TrainArgs tr;
    auto* cmd_train = app.add_subcommand("train", "Train a Gaussian posterior on the bound");
    cmd_train->add_option("--data", tr.data, "CSV: header, feature columns, integer label")->required();
    cmd_train->add_option("--partition", tr.partition, "Partition JSON")->required();
    cmd_train->add_option("--config", tr.config, "Training config JSON");
    cmd_train->add_option("--seed", tr.seed, "Overrides the config seed");
    cmd_train->add_option("--out", tr.out, "Directory for result.json, certificate.json, history.jsonl");

    VerifyArgs ver;
    auto* cmd_verify = app.add_subcommand("verify", "Monte Carlo and enumeration checks");
    cmd_verify->add_option("--suite", ver.suite, "Suite to run")
        ->check(CLI::IsMember({"budget", "lemma5", "lemma7", "prop8", "all"}))
        ->capture_default_str();
    cmd_verify->add_option("--seed", ver.seed, "RNG seed")->capture_default_str();
    cmd_verify->add_option("--out", ver.out, "Write the report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        CLI::App* failed = &app;
        for (CLI::App* sub : app.get_subcommands()) failed = sub;
        std::cerr << failed->help();
        return kMalformed;
    }

    try {
        if (cmd_bound->parsed()) return run_bound(bound);
        if (cmd_klinv->parsed()) return run_klinv(klinv);
        if (cmd_constants->parsed()) return run_constants(constants);
        if (cmd_train->parsed()) return run_train(tr);
        if (cmd_verify->parsed()) return run_verify(ver);
    } catch (const InfeasibleMode& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kInfeasible;
    } catch (const BoundaryRisk& e) {
        std::cerr << "boundary risk: " << e.what() << " (pass --smooth <alpha> to smooth)\n";
        return kBoundary;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kMalformed;
    }
    return kMalformed;
}
