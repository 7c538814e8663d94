#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "openrgbt/backend.hpp"
#include "openrgbt/core.hpp"
#include "openrgbt/fusion.hpp"

/// JSON-lines messages exchanged with model backends. See docs/protocol.md.
namespace openrgbt::protocol {

inline constexpr int kVersion = 1;

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws InvalidInput on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct HelloRequest {
    friend bool operator==(const HelloRequest&, const HelloRequest&) = default;
};

struct DetectTextRequest {
    std::string image_id;
    Raster image;
    std::vector<std::string> classes;
    friend bool operator==(const DetectTextRequest&, const DetectTextRequest&) = default;
};

struct PromptSpec {
    std::string class_name;
    Box box;
    std::optional<Raster> image;
    friend bool operator==(const PromptSpec&, const PromptSpec&) = default;
};

struct DetectVisualRequest {
    std::string image_id;
    Raster image;
    std::vector<PromptSpec> prompts;
    friend bool operator==(const DetectVisualRequest&, const DetectVisualRequest&) = default;
};

struct EmbedTextsRequest {
    std::vector<std::string> texts;
    friend bool operator==(const EmbedTextsRequest&, const EmbedTextsRequest&) = default;
};

struct CropSpec {
    Box box;
    Raster image;
    friend bool operator==(const CropSpec&, const CropSpec&) = default;
};

struct EmbedCropsRequest {
    std::string image_id;
    std::vector<CropSpec> crops;
    friend bool operator==(const EmbedCropsRequest&, const EmbedCropsRequest&) = default;
};

struct SegmentRequest {
    std::string image_id;
    Raster image;
    std::vector<Box> boxes;
    friend bool operator==(const SegmentRequest&, const SegmentRequest&) = default;
};

struct FusionWeightsRequest {
    std::string image_id;
    Raster rgb;
    Raster thermal;
    friend bool operator==(const FusionWeightsRequest&, const FusionWeightsRequest&) = default;
};

using RequestBody = std::variant<HelloRequest, DetectTextRequest, DetectVisualRequest, EmbedTextsRequest,
                                 EmbedCropsRequest, SegmentRequest, FusionWeightsRequest>;

struct Request {
    std::string id;
    RequestBody body;
    friend bool operator==(const Request&, const Request&) = default;
};

struct HelloResult {
    std::size_t embedding_dim = 0;
    std::vector<std::string> capabilities;
    friend bool operator==(const HelloResult&, const HelloResult&) = default;
};

struct DetectResult {
    std::vector<RawDetection> detections;
    friend bool operator==(const DetectResult&, const DetectResult&) = default;
};

struct EmbedResult {
    std::vector<std::vector<double>> embeddings;
    friend bool operator==(const EmbedResult&, const EmbedResult&) = default;
};

struct SegmentResult {
    std::vector<MaskResult> masks;
    friend bool operator==(const SegmentResult&, const SegmentResult&) = default;
};

struct FusionWeightsResult {
    int width = 0;
    int height = 0;
    std::vector<double> weights;
    friend bool operator==(const FusionWeightsResult&, const FusionWeightsResult&) = default;
};

struct ErrorResult {
    std::string message;
    friend bool operator==(const ErrorResult&, const ErrorResult&) = default;
};

using ResponseBody =
    std::variant<HelloResult, DetectResult, EmbedResult, SegmentResult, FusionWeightsResult, ErrorResult>;

struct Response {
    std::string id;
    std::string op;
    ResponseBody body;

    bool ok() const noexcept { return !std::holds_alternative<ErrorResult>(body); }
    friend bool operator==(const Response&, const Response&) = default;
};

/// Wire name of a request body ("hello", "detect_text", ...).
std::string op_name(const RequestBody& body);

nlohmann::json to_json(const Request& request);
nlohmann::json to_json(const Response& response);

/// Throws InvalidInput on unknown ops, missing fields or invalid values.
Request request_from_json(const nlohmann::json& doc);
/// `expected_op` is used when the response does not echo its op.
Response response_from_json(const nlohmann::json& doc, const std::string& expected_op = {});

/// One message per line, no embedded newlines.
std::string encode(const Request& request);
std::string encode(const Response& response);
Request decode_request(std::string_view line);
Response decode_response(std::string_view line, const std::string& expected_op = {});

} // namespace openrgbt::protocol
