#include "bigr/model.hpp"

#include <string>

#include "bigr/errors.hpp"

namespace bigr {

void ModelConfig::validate() const {
  backbone.validate();
  transcoder.validate();
  require(backbone.code_bits == transcoder.code_bits, ErrorKind::InvalidInput,
          "backbone and transcoder code widths differ");
  require(backbone.dim == transcoder.cond_dim, ErrorKind::InvalidInput,
          "transcoder condition width must equal the backbone dim");
}

template <class T>
GenerativeModel<T>::GenerativeModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, 0x4D4F44ull));
  Rng bb_rng = rng.split(1);
  Rng tc_rng = rng.split(2);
  backbone_ = std::make_unique<Backbone<T>>(config_.backbone, params_, bb_rng);
  transcoder_ = std::make_unique<Transcoder<T>>(config_.transcoder, params_, tc_rng);
  schedule_ = build_schedule(config_.transcoder.total_steps);
}

template <class T>
std::vector<NamedArray> export_parameters(const nn::ParameterSet<T>& params) {
  std::vector<NamedArray> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    NamedArray a;
    a.name = p->name;
    a.dtype = sizeof(T) == 4 ? DType::F32 : DType::F64;
    a.dims = {static_cast<std::uint32_t>(p->value.rows()), static_cast<std::uint32_t>(p->value.cols())};
    a.values.assign(p->value.data(), p->value.data() + p->value.size());
    out.push_back(std::move(a));
  }
  return out;
}

template <class T>
void import_parameters(nn::ParameterSet<T>& params, const Checkpoint& checkpoint) {
  std::vector<const NamedArray*> found;
  found.reserve(params.size());
  for (const auto& p : params) {
    const NamedArray* a = checkpoint.find(p->name);
    if (a == nullptr) fail(ErrorKind::CheckpointIncompatible, "checkpoint has no array named " + p->name);
    if (a->dims.size() != 2 || a->dims[0] != p->value.rows() || a->dims[1] != p->value.cols()) {
      fail(ErrorKind::CheckpointIncompatible, "array " + p->name + " has a shape that does not match the config");
    }
    found.push_back(a);
  }
  if (checkpoint.arrays.size() != params.size()) {
    fail(ErrorKind::CheckpointIncompatible, "checkpoint holds " + std::to_string(checkpoint.arrays.size()) +
                                                " arrays but the config defines " + std::to_string(params.size()));
  }
  std::size_t i = 0;
  for (auto& p : params) {
    const NamedArray& a = *found[i++];
    for (Eigen::Index j = 0; j < p->value.size(); ++j) p->value.data()[j] = static_cast<T>(a.values[j]);
  }
}

template class GenerativeModel<float>;
template class GenerativeModel<double>;
template std::vector<NamedArray> export_parameters(const nn::ParameterSet<float>&);
template std::vector<NamedArray> export_parameters(const nn::ParameterSet<double>&);
template void import_parameters(nn::ParameterSet<float>&, const Checkpoint&);
template void import_parameters(nn::ParameterSet<double>&, const Checkpoint&);

}  // namespace bigr
