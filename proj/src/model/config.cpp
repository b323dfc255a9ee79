#include "protoseg/model/config.hpp"

#include <sstream>

#include "protoseg/core/error.hpp"

namespace protoseg::model {

void ModelConfig::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (heads < 1) throw ConfigError("heads must be >= 1");
  if (resolved_token_width() % heads != 0)
    throw ConfigError("token width " + std::to_string(resolved_token_width()) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  if ((4 * width(kNumLevels)) % heads != 0)
    throw ConfigError("fusion width " + std::to_string(4 * width(kNumLevels)) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  if (ffn_dropout < 0.0 || ffn_dropout >= 1.0) throw ConfigError("ffn_dropout must lie in [0, 1)");
}

std::string ModelConfig::fingerprint() const {
  std::ostringstream os;
  os << "base_channels=" << base_channels << ";token_width=" << resolved_token_width() << ";heads=" << heads
     << ";ffn_hidden=" << resolved_ffn_hidden() << ";single_channel_activation=" << single_channel_activation
     << ";fusion_residual=" << fusion_residual << ";prototype_masked_average=" << prototype_masked_average
     << ";full_model=" << full_model;
  return os.str();
}

}  // namespace protoseg::model
