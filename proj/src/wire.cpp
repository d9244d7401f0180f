#include "symode/wire.hpp"

#include <cmath>

namespace symode {

namespace {

using nlohmann::json;

[[noreturn]] void malformed(const std::string& what) {
    throw ScorerError(ScorerError::Kind::Malformed, "malformed frame: " + what);
}

json parse_frame(std::string_view line) {
    if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) malformed("not a JSON object");
    const auto v = j.find("v");
    if (v == j.end() || !v->is_number_integer()) malformed("missing version");
    if (v->get<long long>() != kWireVersion)
        throw ScorerError(ScorerError::Kind::Version, "unsupported protocol version " + v->dump());
    return j;
}

} // namespace

json item_to_json(const SeqItem& item) {
    if (const auto* tok = std::get_if<TokenId>(&item)) return {{"tok", tok->id}};
    const auto& c = std::get<TwoHot>(item);
    return {{"const", {{"i", c.i}, {"alpha", c.alpha}, {"beta", c.beta}}}};
}

SeqItem item_from_json(const json& j) {
    if (!j.is_object() || j.size() != 1) malformed("item must be an object with one key");
    if (const auto tok = j.find("tok"); tok != j.end()) {
        if (!tok->is_number_integer()) malformed("tok must be an integer");
        return TokenId{tok->get<int>()};
    }
    const auto c = j.find("const");
    if (c == j.end() || !c->is_object()) malformed("unknown item kind");
    const auto i = c->find("i"), a = c->find("alpha"), b = c->find("beta");
    if (i == c->end() || a == c->end() || b == c->end() || !i->is_number_integer() || !a->is_number() ||
        !b->is_number())
        malformed("const needs integer i and numeric alpha, beta");
    return TwoHot{i->get<int>(), a->get<double>(), b->get<double>()};
}

std::string encode_request(const ScorerRequest& req) {
    json prefix = json::array();
    for (const auto& item : req.prefix) prefix.push_back(item_to_json(item));
    return json{{"v", kWireVersion}, {"traj_id", req.traj_id}, {"prefix", std::move(prefix)}}.dump() + "\n";
}

ScorerRequest decode_request(std::string_view line) {
    const json j = parse_frame(line);
    const auto id = j.find("traj_id"), prefix = j.find("prefix");
    if (id == j.end() || !id->is_string()) malformed("traj_id must be a string");
    if (prefix == j.end() || !prefix->is_array()) malformed("prefix must be an array");
    ScorerRequest req{id->get<std::string>(), {}};
    for (const auto& item : *prefix) req.prefix.push_back(item_from_json(item));
    return req;
}

std::string encode_response(const std::vector<double>& logits) {
    return json{{"v", kWireVersion}, {"logits", logits}}.dump() + "\n";
}

std::string encode_error(const std::string& message) {
    return json{{"v", kWireVersion}, {"error", message}}.dump() + "\n";
}

std::vector<double> decode_response(std::string_view line, int vocab_size) {
    const json j = parse_frame(line);
    if (const auto err = j.find("error"); err != j.end())
        throw ScorerError(ScorerError::Kind::Peer, "peer error: " + (err->is_string() ? err->get<std::string>() : err->dump()));
    const auto logits = j.find("logits");
    if (logits == j.end() || !logits->is_array()) malformed("logits must be an array");
    if (static_cast<int>(logits->size()) != vocab_size)
        malformed("expected " + std::to_string(vocab_size) + " logits, got " + std::to_string(logits->size()));
    std::vector<double> out;
    out.reserve(logits->size());
    for (const auto& x : *logits) {
        if (!x.is_number()) malformed("logit is not a number");
        const double v = x.get<double>();
        if (!std::isfinite(v)) malformed("logit is not finite");
        out.push_back(v);
    }
    return out;
}

} // namespace symode
