// Copyright 2026 The Pathforge Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PATHFORGE_ERROR_H_
#define PATHFORGE_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace pathforge {

/// Every failure raised by the library carries one of these codes. The
/// names mirror the error vocabulary used by the CLI's JSON error output.
enum class ErrorCode {
  kInvalidArgument,
  kIoFailure,
  // slide_io
  kMissingFile,
  kBadMagic,
  kCorruptIndex,
  kInconsistentPyramid,
  kBadLevel,
  kZeroArea,
  kUnknownMagnification,
  // tissue_seg
  kDegenerateHistogram,
  kEmptyTissue,
  kEmptyMask,
  kMalformedGeoJson,
  kUnsupportedGeometry,
  // patch_grid
  kMagnificationUnavailable,
  kNoPatches,
  kBadIndex,
  kVersionMismatch,
  kTruncatedFile,
  // feature_engine
  kUnknownEncoder,
  kSizeMismatch,
  kExternalEncoderFailure,
  kEmptyStore,
  kDimMismatch,
  // task_splits
  kSchemaError,
  kLeakageError,
  kLabelConflict,
  kRatioWarning,
  kTooFewSamples,
  kClassStarvation,
  // eval_suite
  kSingleClass,
  kNonFinite,
  kNoEvents,
  kDivergence,
  kEmptyBag,
  kKTooLarge,
  kEmptyClass,
  kDegenerateMarginals,
  kNoComparablePairs,
  kMissingFeatures,
  kIncompatibleFramework,
  // sweep_orchestrator
  kEmptyMatrix,
  kTaskParseFailure,
  kNoResults,
  kMissingLedger,
  // cli
  kUnknownSubcommand,
};

/// Stable, CamelCase name of a code ("CorruptIndex", "LeakageError", ...).
std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace pathforge

#endif  // PATHFORGE_ERROR_H_
