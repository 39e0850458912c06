#pragma once

// Mounts a SessionService on an httplib server.

#include <filesystem>
#include <optional>

#include "deanchor/error.hpp"
#include "deanchor/session_service.hpp"

namespace httplib {
class Server;
}

namespace deanchor::service {

int http_status(ErrorKind kind) noexcept;

// Routes: POST /sessions, GET /sessions/{id}/trial, POST /sessions/{id}/answer,
// POST /sessions/{id}/advance, GET /sessions/{id}/summary, GET /healthz.
// A blocked advance answers 425 with the remaining time.
void mount(httplib::Server& server, SessionService& service,
           const std::optional<std::filesystem::path>& static_dir = std::nullopt);

}  // namespace deanchor::service
