#include "deanchor/error.hpp"

namespace deanchor {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Parameter: return "parameter";
        case ErrorKind::Evidence: return "evidence";
        case ErrorKind::Model: return "model";
        case ErrorKind::Capability: return "capability";
        case ErrorKind::Calibration: return "calibration";
        case ErrorKind::Budget: return "budget";
        case ErrorKind::Config: return "config";
        case ErrorKind::Data: return "data";
        case ErrorKind::Training: return "training";
        case ErrorKind::Sampling: return "sampling";
        case ErrorKind::State: return "state";
        case ErrorKind::NotFound: return "not-found";
        case ErrorKind::Conflict: return "conflict";
        case ErrorKind::Gone: return "gone";
        case ErrorKind::Validation: return "validation";
    }
    return "unknown";
}

}  // namespace deanchor
