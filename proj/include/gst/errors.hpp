#pragma once

#include <stdexcept>
#include <string>

namespace gst {

// Every error the library raises derives from Error so callers (the CLI in
// particular) can map them to a machine-readable record with a stable kind.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define GST_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(Kind, what) {}     \
  };

GST_DEFINE_ERROR(DimensionError, "dimension")
GST_DEFINE_ERROR(NumericError, "numeric")
GST_DEFINE_ERROR(IndexError, "index")
GST_DEFINE_ERROR(ContractError, "contract")
GST_DEFINE_ERROR(GrammarError, "grammar")
GST_DEFINE_ERROR(CapacityError, "capacity")
GST_DEFINE_ERROR(VocabError, "vocab")
GST_DEFINE_ERROR(DecodeError, "decode")
GST_DEFINE_ERROR(DataError, "data")
GST_DEFINE_ERROR(FormatError, "format")
GST_DEFINE_ERROR(ConfigError, "config")
GST_DEFINE_ERROR(MissingArtifactError, "missing_artifact")
GST_DEFINE_ERROR(HashMismatchError, "hash_mismatch")

#undef GST_DEFINE_ERROR

}  // namespace gst
