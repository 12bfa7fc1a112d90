#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "chf/policies.hpp"

namespace chf {

/// Stored model whose checksum does not match its contents.
class ChecksumError : public DataError {
public:
    using DataError::DataError;
};

std::string sha256_hex(std::string_view bytes);

nlohmann::json to_json(const CanonConfig& c);
CanonConfig canon_from_json(const nlohmann::json& j);

/// Serialized model: traces, options, raw distances, both decompositions,
/// the kernel matrix, the dataset hash, and a checksum over the rest.
/// Deterministic for identical inputs.
std::string model_to_string(const GprModel& m, const std::string& dataset_sha256);
GprModel model_from_string(const std::string& text, std::string* dataset_sha256 = nullptr);

void save_model(const std::string& path, const GprModel& m, const std::string& dataset_sha256);
GprModel load_model(const std::string& path, std::string* dataset_sha256 = nullptr);

}  // namespace chf
