#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include <fmt/format.h>

#include "sexid/errors.hpp"
#include "sexid/translation.hpp"

namespace sexid {

HttpProvider::HttpProvider(HttpProviderOptions options) : options_(std::move(options)) {
    const auto& url = options_.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("translation endpoint '" + url + "' has no scheme");
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw ConfigError("translation endpoint scheme must be http or https, got '" + scheme + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpProvider::id() const { return "http:" + options_.endpoint; }

std::string HttpProvider::do_translate(std::string_view text, Language source, Language target) {
    httplib::Client client(origin_);
    const auto secs = options_.timeout.count() / 1000;
    const auto usecs = (options_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    if (!options_.token.empty()) client.set_bearer_token_auth(options_.token);

    httplib::Params params{{"q", std::string(text)},
                           {"source", std::string(to_string(source))},
                           {"target", std::string(to_string(target))}};
    auto res = client.Post(path_, params);
    if (!res) throw TransportError("", fmt::format("POST {} failed: {}", options_.endpoint, httplib::to_string(res.error())));
    if (res->status != 200)
        throw TransportError("", fmt::format("POST {} returned HTTP {}", options_.endpoint, res->status));

    const auto content_type = res->get_header_value("Content-Type");
    if (content_type.find("json") != std::string::npos) {
        auto body = nlohmann::json::parse(res->body, nullptr, false);
        if (body.is_discarded()) throw TransportError("", "translation endpoint returned malformed JSON");
        if (body.is_string()) return body.get<std::string>();
        if (body.is_object() && body.contains("translatedText") && body["translatedText"].is_string())
            return body["translatedText"].get<std::string>();
        throw TransportError("", "translation endpoint JSON lacks a translatedText string");
    }
    return res->body;
}

}  // namespace sexid
