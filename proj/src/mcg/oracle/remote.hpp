#ifndef MCG_ORACLE_REMOTE_HPP
#define MCG_ORACLE_REMOTE_HPP

#include <string>

#include "mcg/oracle/oracle.hpp"

namespace mcg::oracle {

// HTTP scoring endpoint. The request is a JSON POST carrying the image as
// base64 raw doubles plus its shape; the response either carries a dense
// score vector or a sparse (label, confidence) list which is densified
// with zeros for unlisted classes.
struct RemoteConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/score";
  std::string image_field = "image";
  std::string shape_field = "shape";
  std::string scores_field = "scores";
  std::string predictions_field = "predictions";
  std::string label_field = "label";
  std::string confidence_field = "confidence";
  int num_classes = 0;  // required for sparse responses
  int retries = 3;
  int timeout_seconds = 10;
};

// Transient transport failures are retried `retries` times and then
// surface as OracleUnavailable; malformed responses are
// OracleProtocolError. Neither charges the ledger.
ScoreFn remote_score_fn(const RemoteConfig& cfg);

std::string base64_encode(const unsigned char* data, std::size_t len);

}  // namespace mcg::oracle

#endif
