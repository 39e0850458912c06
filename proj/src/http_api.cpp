#include "deanchor/http_api.hpp"

#include <httplib.h>

#include "deanchor/json_io.hpp"

namespace deanchor::service {

namespace {

void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorKind kind, const std::string& message) {
    Json body = make_document("error");
    body["error"] = to_string(kind);
    body["message"] = message;
    send(res, http_status(kind), body);
}

Json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return nullptr;
    try {
        return Json::parse(req.body);
    } catch (const Json::parse_error& e) {
        fail(ErrorKind::Validation, std::string("malformed JSON: ") + e.what());
    }
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, e.kind(), e.what());
        } catch (const Json::exception& e) {
            send_error(res, ErrorKind::Validation, e.what());
        } catch (const std::exception& e) {
            Json body = make_document("error");
            body["error"] = "internal";
            body["message"] = e.what();
            send(res, 500, body);
        }
    };
}

}  // namespace

int http_status(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::NotFound: return 404;
        case ErrorKind::State:
        case ErrorKind::Conflict: return 409;
        case ErrorKind::Gone: return 410;
        case ErrorKind::Validation:
        case ErrorKind::Parameter: return 400;
        default: return 500;
    }
}

void mount(httplib::Server& server, SessionService& service, const std::optional<std::filesystem::path>& static_dir) {
    server.Get("/healthz", guarded([](const httplib::Request&, httplib::Response& res) {
        Json body = make_document("health");
        body["status"] = "ok";
        send(res, 200, body);
    }));
    server.Post("/sessions", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send(res, 201, service.create_session(parse_body(req)));
    }));
    server.Get(R"(/sessions/([0-9a-f]+)/trial)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send(res, 200, service.next_trial(req.matches[1]));
    }));
    server.Post(R"(/sessions/([0-9a-f]+)/answer)",
                guarded([&service](const httplib::Request& req, httplib::Response& res) {
                    send(res, 200, service.submit_answer(req.matches[1], parse_body(req)));
                }));
    server.Post(R"(/sessions/([0-9a-f]+)/advance)",
                guarded([&service](const httplib::Request& req, httplib::Response& res) {
                    const Json out = service.advance(req.matches[1]);
                    send(res, out.value("advanced", false) ? 200 : 425, out);
                }));
    server.Get(R"(/sessions/([0-9a-f]+)/summary)",
               guarded([&service](const httplib::Request& req, httplib::Response& res) {
                   send(res, 200, service.summary(req.matches[1]));
               }));
    if (static_dir && !static_dir->empty()) {
        if (!server.set_mount_point("/", static_dir->string())) {
            fail(ErrorKind::Config, "static directory not found: " + static_dir->string());
        }
    }
}

}  // namespace deanchor::service
