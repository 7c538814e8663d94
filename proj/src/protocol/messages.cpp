#include <type_traits>

#include "openrgbt/error.hpp"
#include "openrgbt/image_io.hpp"
#include "openrgbt/protocol.hpp"

namespace openrgbt::protocol {

using nlohmann::json;

namespace {

template <class>
inline constexpr bool always_false = false;

json box_json(const Box& b) { return json::array({b.x(), b.y(), b.w(), b.h()}); }

Box box_from(const json& j) {
    if (!j.is_array() || j.size() != 4) {
        throw InvalidInput("box must be [x, y, w, h]");
    }
    return Box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

/// Detector output may poke slightly outside the frame; clamp instead of
/// rejecting. Returns nullopt for boxes with nothing left.
std::optional<Box> lenient_box_from(const json& j) {
    if (!j.is_array() || j.size() != 4) {
        throw InvalidInput("box must be [x, y, w, h]");
    }
    const double x = j[0].get<double>();
    const double y = j[1].get<double>();
    const double w = j[2].get<double>();
    const double h = j[3].get<double>();
    try {
        return Box(x, y, w, h);
    } catch (const InvalidInput&) {
        return Box::clamped(x, y, w, h);
    }
}

std::string image_json(const Raster& r) { return base64_encode(encode_png(r)); }

Raster image_from(const json& j) {
    const auto bytes = base64_decode(j.get<std::string>());
    try {
        return decode_png(bytes);
    } catch (const IoError& e) {
        throw InvalidInput(std::string("embedded image: ") + e.what());
    }
}

json rle_json(const RleMask& m) { return {{"width", m.width()}, {"height", m.height()}, {"runs", m.runs()}}; }

RleMask rle_from(const json& j) {
    return RleMask(j.at("width").get<int>(), j.at("height").get<int>(), j.at("runs").get<std::vector<std::uint32_t>>());
}

json body_json(const RequestBody& body) {
    return std::visit(
        [](const auto& r) -> json {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, HelloRequest>) {
                return json::object();
            } else if constexpr (std::is_same_v<T, DetectTextRequest>) {
                return {{"image_id", r.image_id}, {"image", image_json(r.image)}, {"classes", r.classes}};
            } else if constexpr (std::is_same_v<T, DetectVisualRequest>) {
                json prompts = json::array();
                for (const auto& p : r.prompts) {
                    json item = {{"class", p.class_name}, {"box", box_json(p.box)}};
                    if (p.image) {
                        item["image"] = image_json(*p.image);
                    }
                    prompts.push_back(std::move(item));
                }
                return {{"image_id", r.image_id}, {"image", image_json(r.image)}, {"prompts", prompts}};
            } else if constexpr (std::is_same_v<T, EmbedTextsRequest>) {
                return {{"texts", r.texts}};
            } else if constexpr (std::is_same_v<T, EmbedCropsRequest>) {
                json crops = json::array();
                for (const auto& c : r.crops) {
                    crops.push_back({{"box", box_json(c.box)}, {"image", image_json(c.image)}});
                }
                return {{"image_id", r.image_id}, {"crops", crops}};
            } else if constexpr (std::is_same_v<T, SegmentRequest>) {
                json boxes = json::array();
                for (const auto& b : r.boxes) {
                    boxes.push_back(box_json(b));
                }
                return {{"image_id", r.image_id}, {"image", image_json(r.image)}, {"boxes", boxes}};
            } else if constexpr (std::is_same_v<T, FusionWeightsRequest>) {
                return {{"image_id", r.image_id}, {"rgb", image_json(r.rgb)}, {"thermal", image_json(r.thermal)}};
            } else {
                static_assert(always_false<T>);
            }
        },
        body);
}

json result_json(const ResponseBody& body) {
    return std::visit(
        [](const auto& r) -> json {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, HelloResult>) {
                return {{"protocol_version", kVersion},
                        {"embedding_dim", r.embedding_dim},
                        {"capabilities", r.capabilities}};
            } else if constexpr (std::is_same_v<T, DetectResult>) {
                json dets = json::array();
                for (const auto& d : r.detections) {
                    dets.push_back({{"box", box_json(d.box)}, {"label", d.label}, {"score", d.score}});
                }
                return {{"detections", dets}};
            } else if constexpr (std::is_same_v<T, EmbedResult>) {
                return {{"embeddings", r.embeddings}};
            } else if constexpr (std::is_same_v<T, SegmentResult>) {
                json masks = json::array();
                for (const auto& m : r.masks) {
                    masks.push_back({{"rle", rle_json(m.mask)}, {"caption", m.caption}});
                }
                return {{"masks", masks}};
            } else if constexpr (std::is_same_v<T, FusionWeightsResult>) {
                return {{"width", r.width}, {"height", r.height}, {"weights", r.weights}};
            } else if constexpr (std::is_same_v<T, ErrorResult>) {
                return json::object();
            } else {
                static_assert(always_false<T>);
            }
        },
        body);
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw InvalidInput(std::string(what) + ": " + e.what());
    }
}

} // namespace

std::string op_name(const RequestBody& body) {
    static constexpr const char* names[] = {"hello",       "detect_text", "detect_visual",  "embed_texts",
                                            "embed_crops", "segment",     "fusion_weights"};
    return names[body.index()];
}

json to_json(const Request& request) {
    json doc = body_json(request.body);
    doc["id"] = request.id;
    doc["op"] = op_name(request.body);
    return doc;
}

json to_json(const Response& response) {
    json doc = {{"id", response.id}, {"op", response.op}, {"ok", response.ok()}};
    if (const auto* err = std::get_if<ErrorResult>(&response.body)) {
        doc["error"] = err->message;
    } else {
        doc["result"] = result_json(response.body);
    }
    return doc;
}

Request request_from_json(const json& doc) {
    return guarded("request", [&]() -> Request {
        Request req;
        req.id = doc.at("id").is_string() ? doc.at("id").get<std::string>() : doc.at("id").dump();
        const auto op = doc.at("op").get<std::string>();
        if (op == "hello") {
            req.body = HelloRequest{};
        } else if (op == "detect_text") {
            req.body = DetectTextRequest{doc.at("image_id").get<std::string>(), image_from(doc.at("image")),
                                         doc.at("classes").get<std::vector<std::string>>()};
        } else if (op == "detect_visual") {
            DetectVisualRequest r{doc.at("image_id").get<std::string>(), image_from(doc.at("image")), {}};
            for (const auto& p : doc.at("prompts")) {
                PromptSpec spec{p.at("class").get<std::string>(), box_from(p.at("box")), std::nullopt};
                if (p.contains("image") && !p["image"].is_null()) {
                    spec.image = image_from(p["image"]);
                }
                r.prompts.push_back(std::move(spec));
            }
            req.body = std::move(r);
        } else if (op == "embed_texts") {
            req.body = EmbedTextsRequest{doc.at("texts").get<std::vector<std::string>>()};
        } else if (op == "embed_crops") {
            EmbedCropsRequest r{doc.at("image_id").get<std::string>(), {}};
            for (const auto& c : doc.at("crops")) {
                r.crops.push_back(CropSpec{box_from(c.at("box")), image_from(c.at("image"))});
            }
            req.body = std::move(r);
        } else if (op == "segment") {
            SegmentRequest r{doc.at("image_id").get<std::string>(), image_from(doc.at("image")), {}};
            for (const auto& b : doc.at("boxes")) {
                r.boxes.push_back(box_from(b));
            }
            req.body = std::move(r);
        } else if (op == "fusion_weights") {
            req.body = FusionWeightsRequest{doc.at("image_id").get<std::string>(), image_from(doc.at("rgb")),
                                            image_from(doc.at("thermal"))};
        } else {
            throw InvalidInput("unknown op '" + op + "'");
        }
        return req;
    });
}

Response response_from_json(const json& doc, const std::string& expected_op) {
    return guarded("response", [&]() -> Response {
        Response resp;
        resp.id = doc.at("id").is_string() ? doc.at("id").get<std::string>() : doc.at("id").dump();
        resp.op = doc.contains("op") ? doc["op"].get<std::string>() : expected_op;
        if (!doc.at("ok").get<bool>()) {
            resp.body = ErrorResult{doc.value("error", std::string("unspecified backend error"))};
            return resp;
        }
        const json& r = doc.at("result");
        const std::string& op = resp.op;
        if (op == "hello") {
            // Servers that predate versioning omit the field.
            if (const int v = r.value("protocol_version", kVersion); v != kVersion) {
                throw InvalidInput("unsupported protocol version " + std::to_string(v) + " (expected " +
                                   std::to_string(kVersion) + ")");
            }
            resp.body = HelloResult{r.at("embedding_dim").get<std::size_t>(),
                                    r.at("capabilities").get<std::vector<std::string>>()};
        } else if (op == "detect_text" || op == "detect_visual") {
            DetectResult out;
            for (const auto& d : r.at("detections")) {
                if (auto box = lenient_box_from(d.at("box"))) {
                    out.detections.push_back(RawDetection{*box, d.at("label").get<std::string>(),
                                                          d.at("score").get<double>()});
                }
            }
            resp.body = std::move(out);
        } else if (op == "embed_texts" || op == "embed_crops") {
            resp.body = EmbedResult{r.at("embeddings").get<std::vector<std::vector<double>>>()};
        } else if (op == "segment") {
            SegmentResult out;
            for (const auto& m : r.at("masks")) {
                out.masks.push_back(MaskResult{rle_from(m.at("rle")), m.value("caption", std::string())});
            }
            resp.body = std::move(out);
        } else if (op == "fusion_weights") {
            resp.body = FusionWeightsResult{r.at("width").get<int>(), r.at("height").get<int>(),
                                            r.at("weights").get<std::vector<double>>()};
        } else {
            throw InvalidInput("response for unknown op '" + op + "'");
        }
        return resp;
    });
}

// Invalid UTF-8 (say, in a detector label) is replaced rather than thrown.
std::string encode(const Request& request) {
    return to_json(request).dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string encode(const Response& response) {
    return to_json(response).dump(-1, ' ', false, json::error_handler_t::replace);
}

Request decode_request(std::string_view line) {
    json doc = guarded("request", [&] { return json::parse(line); });
    return request_from_json(doc);
}

Response decode_response(std::string_view line, const std::string& expected_op) {
    json doc = guarded("response", [&] { return json::parse(line); });
    return response_from_json(doc, expected_op);
}

} // namespace openrgbt::protocol
