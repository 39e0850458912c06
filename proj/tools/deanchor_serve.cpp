// deanchor-serve: the experiment-2 session API plus static UI files.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>

#include "deanchor/config.hpp"
#include "deanchor/error.hpp"
#include "deanchor/http_api.hpp"
#include "deanchor/session_service.hpp"

using namespace deanchor;

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deanchor-serve: timed human-AI decision sessions over HTTP"};
    std::string config_path;
    std::string host = "127.0.0.1";
    int port = 8080;
    app.add_option("--config", config_path, "Pipeline config file (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--host", host, "Listen address");
    app.add_option("--port", port, "Listen port")->check(CLI::Range(0, 65535));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const auto cfg = load_config(config_path);
        const auto world = sim::build_world(cfg.data, cfg.agent, cfg.training);
        const sim::Experiment2Design design(world, cfg.design_seed(), cfg.simulate.times);
        auto bank = service::make_trial_bank(world, design, cfg.service.training_trials, cfg.design_seed());

        service::ServiceOptions opts;
        opts.seed = cfg.run_seed();
        opts.expiry_seconds = cfg.service.expiry_seconds;
        if (!cfg.service.state_dir.empty()) opts.state_dir = cfg.service.state_dir;
        service::SessionService svc(std::move(bank), opts);

        httplib::Server server;
        service::mount(server, svc, cfg.service.static_dir.empty()
                                        ? std::nullopt
                                        : std::optional<std::filesystem::path>(cfg.service.static_dir));
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        if (port == 0) {
            port = server.bind_to_any_port(host);
            if (port < 0) throw Error(ErrorKind::Config, "cannot bind " + host);
        } else if (!server.bind_to_port(host, port)) {
            throw Error(ErrorKind::Config, "cannot bind " + host + ":" + std::to_string(port));
        }
        std::cout << "listening on http://" << host << ":" << port << std::endl;
        server.listen_after_bind();
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return e.kind() == ErrorKind::Config ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
