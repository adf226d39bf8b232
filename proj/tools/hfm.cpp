#include <iostream>

#include <CLI11.hpp>

#include "hfm/jobs.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> workers;
    std::vector<std::string> overrides;
    bool print_config = false;
};

void add_job_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON job configuration");
    cmd->add_option("--seed", f.seed, "top-level seed");
    cmd->add_option("--out", f.out, "output directory; relative io paths resolve against it");
    cmd->add_option("--workers", f.workers, "worker threads for gen and simulate");
    cmd->add_option("--set", f.overrides, "override a config value, e.g. --set train.steps=200")->take_all();
    cmd->add_flag("--print-config", f.print_config, "print the resolved configuration and exit");
}

hfm::JobConfig resolve(const std::string& command, const Flags& f) {
    hfm::Json j = f.config.empty() ? hfm::Json::object() : hfm::read_json_file(f.config);
    for (const std::string& o : f.overrides) hfm::apply_override(j, o);
    hfm::JobConfig c = hfm::job_from_json(j);
    c.command = command;
    if (f.seed) c.seed = *f.seed;
    if (f.out) c.io.out = *f.out;
    if (f.workers) c.workers = *f.workers;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hamiltonian flow map trainer and simulator"};
    app.require_subcommand(0, 1);
    Flags flags;
    std::vector<CLI::App*> commands;
    for (const char* name : {"gen", "train", "simulate", "eval"}) {
        CLI::App* cmd = app.add_subcommand(name, std::string(name) == "gen"        ? "generate a training dataset"
                                                 : std::string(name) == "train"    ? "train a flow map network"
                                                 : std::string(name) == "simulate" ? "roll out a stepper"
                                                                                   : "compare trajectories");
        add_job_flags(cmd, flags);
        commands.push_back(cmd);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const hfm::JobConfig cfg = resolve(command, flags);
        if (flags.print_config) {
            std::cout << hfm::dump_config(cfg);
            return 0;
        }
        hfm::ensure_out_dir(cfg);
        hfm::write_text(hfm::resolve_path(cfg, command + "_config.json"), hfm::dump_config(cfg));
        return hfm::run_job(cfg);
    } catch (const hfm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return hfm::exit_code(e.kind());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
