#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "symode/codec.hpp"

namespace symode {

/// Scorer wire protocol, version 1.
///
/// One frame per line, UTF-8 JSON with no interior newline, terminated by "\n".
/// Frames are written by nlohmann::json::dump() with no indentation, so object
/// keys appear in sorted order and doubles use shortest round-trip form.
///   request  {"prefix":[item...],"traj_id":"<str>","v":1}
///   response {"logits":[float...],"v":1}      length == vocabulary size
///   error    {"error":"<message>","v":1}
///   item     {"tok":<id>} | {"const":{"alpha":<a>,"beta":<b>,"i":<grid index>}}
/// The prefix starts with BOS and lists every item decoded so far.
inline constexpr int kWireVersion = 1;

class ScorerError : public std::runtime_error {
public:
    enum class Kind { Transport, Version, Malformed, Peer };

    ScorerError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct ScorerRequest {
    std::string traj_id;
    TokenSeq prefix;
};

nlohmann::json item_to_json(const SeqItem& item);
/// Throws ScorerError(Malformed).
SeqItem item_from_json(const nlohmann::json& j);

std::string encode_request(const ScorerRequest& req);
/// Throws ScorerError(Version) on a version other than 1, Malformed otherwise.
ScorerRequest decode_request(std::string_view line);

std::string encode_response(const std::vector<double>& logits);
std::string encode_error(const std::string& message);
/// Validates version, length and finiteness. An error frame raises ScorerError(Peer).
std::vector<double> decode_response(std::string_view line, int vocab_size);

} // namespace symode
