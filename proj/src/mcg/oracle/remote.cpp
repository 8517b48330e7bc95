#include "mcg/oracle/remote.hpp"

#include <httplib.h>

#include <json.hpp>

namespace mcg::oracle {

std::string base64_encode(const unsigned char* data, std::size_t len) {
  static const char tbl[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned v = data[i] << 16;
    if (i + 1 < len) v |= data[i + 1] << 8;
    if (i + 2 < len) v |= data[i + 2];
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(i + 1 < len ? tbl[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? tbl[v & 63] : '=');
  }
  return out;
}

namespace {

Arr parse_scores(const nlohmann::json& body, const RemoteConfig& cfg) {
  try {
    if (body.contains(cfg.scores_field)) {
      const auto& js = body.at(cfg.scores_field);
      if (!js.is_array() || js.empty())
        throw OracleProtocolError("scores field is not a non-empty array");
      Arr s(js.size());
      for (std::size_t i = 0; i < js.size(); ++i) s[i] = js[i].get<double>();
      return s;
    }
    if (body.contains(cfg.predictions_field)) {
      if (cfg.num_classes <= 0)
        throw OracleProtocolError(
            "sparse response but num_classes unconfigured");
      Arr s = Arr::Zero(cfg.num_classes);
      for (const auto& p : body.at(cfg.predictions_field)) {
        int label = p.at(cfg.label_field).get<int>();
        if (label < 0 || label >= cfg.num_classes)
          throw OracleProtocolError("prediction label out of range");
        s[label] = p.at(cfg.confidence_field).get<double>();
      }
      return s;
    }
  } catch (const nlohmann::json::exception& e) {
    throw OracleProtocolError(std::string("bad response field: ") + e.what());
  }
  throw OracleProtocolError("response carries neither scores nor predictions");
}

}  // namespace

ScoreFn remote_score_fn(const RemoteConfig& cfg) {
  if (cfg.retries < 0) throw ConfigError("remote: retries < 0");
  return [cfg](const Tensor& x) -> Arr {
    nlohmann::json req;
    req[cfg.image_field] = base64_encode(
        (const unsigned char*)x.data.data(), x.data.size() * sizeof(double));
    req[cfg.shape_field] = x.shape;

    std::string last_err;
    for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
      httplib::Client client(cfg.host, cfg.port);
      client.set_connection_timeout(cfg.timeout_seconds);
      client.set_read_timeout(cfg.timeout_seconds);
      auto res = client.Post(cfg.path, req.dump(), "application/json");
      if (!res) {
        last_err = httplib::to_string(res.error());
        continue;  // transport failure: retry, never charge
      }
      if (res->status != 200)
        throw OracleProtocolError("endpoint returned status " +
                                  std::to_string(res->status));
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw OracleProtocolError(std::string("unparseable response: ") +
                                  e.what());
      }
      return parse_scores(body, cfg);
    }
    throw OracleUnavailable("endpoint unreachable: " + last_err);
  };
}

}  // namespace mcg::oracle
