#pragma once

#include <stdexcept>
#include <string>

namespace nutnet {

// Every failure raised by the library derives from Error. The category tells
// the CLI which exit code to use (data errors vs internal faults).
class Error : public std::runtime_error {
 public:
  enum class Category { kData, kInternal };

  explicit Error(const std::string& what, Category category = Category::kData)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

#define NUTNET_DEFINE_ERROR(Name, Cat)                             \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(what, Cat) {}   \
  };

NUTNET_DEFINE_ERROR(DimensionError, Category::kData)
NUTNET_DEFINE_ERROR(InputError, Category::kData)
NUTNET_DEFINE_ERROR(ConfigError, Category::kData)
NUTNET_DEFINE_ERROR(IntegrityError, Category::kData)
NUTNET_DEFINE_ERROR(VersionError, Category::kData)
NUTNET_DEFINE_ERROR(PlacementError, Category::kData)
NUTNET_DEFINE_ERROR(MetricError, Category::kData)
NUTNET_DEFINE_ERROR(BridgeError, Category::kData)
NUTNET_DEFINE_ERROR(TrainingError, Category::kInternal)
NUTNET_DEFINE_ERROR(InternalError, Category::kInternal)

#undef NUTNET_DEFINE_ERROR

}  // namespace nutnet
