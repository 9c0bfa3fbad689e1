#include "mmdemand/error.hpp"

namespace mmdemand {
namespace {

std::string join(const std::vector<FieldError>& errors) {
    std::string out = "invalid parameters:";
    for (const FieldError& e : errors) out += " " + e.field + ": " + e.message + ";";
    if (!errors.empty()) out.pop_back();
    return out;
}

} // namespace

ValidationError::ValidationError(std::vector<FieldError> errors)
    : Error(join(errors)), errors_(std::move(errors)) {}

} // namespace mmdemand
