// eprlab: run an experiment described by a TOML config (or a previous manifest.json).
//
//   eprlab estimate --config rotated_ou.toml --out runs/est
//   eprlab verify harnack --config harnack.toml --workers 4
//
// Exit codes: 0 pass, 2 statistical failure, 1 usage or execution error.

#include "eprlab/errors.hpp"
#include "eprlab/experiment.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> replicas;
    std::string out = "eprlab-out";
    unsigned workers = 1;
};

void add_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "TOML config or manifest.json")->required()->envname("EPRLAB_CONFIG");
    cmd->add_option("--seed", f.seed, "Override the seed")->envname("EPRLAB_SEED");
    cmd->add_option("--replicas", f.replicas, "Override the replica count")->envname("EPRLAB_REPLICAS");
    cmd->add_option("--out", f.out, "Output directory")->envname("EPRLAB_OUT");
    cmd->add_option("--workers", f.workers, "Worker threads (0 = all cores)")->envname("EPRLAB_WORKERS");
}

nlohmann::json load_document(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw eprlab::ConfigError("config: cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(buf.str());
        } catch (const nlohmann::json::parse_error& e) {
            throw eprlab::ConfigError("config: invalid JSON: " + std::string(e.what()));
        }
        return doc.contains("config") ? doc.at("config") : doc;
    }
    return eprlab::toml_to_json(buf.str());
}

int run(const std::string& kind, const Flags& f) {
    nlohmann::json doc = load_document(f.config);
    if (!doc.is_object()) throw eprlab::ConfigError("config: expected a table");
    const eprlab::ExperimentKind k = eprlab::parse_kind(kind);
    if (doc.contains("kind") && doc.at("kind").is_string() &&
        eprlab::parse_kind(doc.at("kind").get<std::string>()) != k) {
        throw eprlab::ConfigError("kind: config says '" + doc.at("kind").get<std::string>() +
                                  "' but the subcommand is '" + kind + "'");
    }
    doc["kind"] = eprlab::kind_name(k);
    if (f.seed) doc["seed"] = *f.seed;
    if (f.replicas) {
        doc["replicas"] = *f.replicas;
        // Verify kinds take their path count from their own table.
        static const char* sections[] = {"harnack", "ibp", "coupling", "martingale", "moments"};
        for (const char* s : sections) {
            if (doc.contains(s) && doc[s].is_object()) doc[s]["n"] = *f.replicas;
        }
    }
    eprlab::ExperimentConfig cfg = eprlab::ExperimentConfig::from_json(doc);
    cfg.workers = f.workers;

    const eprlab::ExperimentResult res = eprlab::run_experiment(cfg, f.out);
    std::cout << eprlab::kind_name(k) << ": " << (res.exit_code == 0 ? "PASS" : "FAIL") << " ("
              << f.out << ")\n";
    return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entropy production experiments for diffusion processes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", EPRLAB_VERSION);

    Flags flags;
    std::string chosen;
    for (const char* name : {"simulate", "estimate", "clt", "mdp", "lil"}) {
        CLI::App* cmd = app.add_subcommand(name, std::string("Run the ") + name + " pipeline");
        add_flags(cmd, flags);
        cmd->callback([&chosen, name] { chosen = name; });
    }
    CLI::App* verify = app.add_subcommand("verify", "Monte Carlo verification of a semigroup property");
    verify->require_subcommand(1);
    for (const char* name : {"harnack", "ibp", "coupling", "martingale", "moments"}) {
        CLI::App* cmd = verify->add_subcommand(name, std::string("Verify ") + name);
        add_flags(cmd, flags);
        cmd->callback([&chosen, name] { chosen = std::string("verify-") + name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : eprlab::kExitError;
    }

    try {
        return run(chosen, flags);
    } catch (const eprlab::ConfigError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return eprlab::kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return eprlab::kExitError;
    }
}
