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

#include "pathforge/error.h"

namespace pathforge {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kCorruptIndex: return "CorruptIndex";
    case ErrorCode::kInconsistentPyramid: return "InconsistentPyramid";
    case ErrorCode::kBadLevel: return "BadLevel";
    case ErrorCode::kZeroArea: return "ZeroArea";
    case ErrorCode::kUnknownMagnification: return "UnknownMagnification";
    case ErrorCode::kDegenerateHistogram: return "DegenerateHistogram";
    case ErrorCode::kEmptyTissue: return "EmptyTissue";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kMalformedGeoJson: return "MalformedGeoJson";
    case ErrorCode::kUnsupportedGeometry: return "UnsupportedGeometry";
    case ErrorCode::kMagnificationUnavailable: return "MagnificationUnavailable";
    case ErrorCode::kNoPatches: return "NoPatches";
    case ErrorCode::kBadIndex: return "BadIndex";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kUnknownEncoder: return "UnknownEncoder";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kExternalEncoderFailure: return "ExternalEncoderFailure";
    case ErrorCode::kEmptyStore: return "EmptyStore";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kLeakageError: return "LeakageError";
    case ErrorCode::kLabelConflict: return "LabelConflict";
    case ErrorCode::kRatioWarning: return "RatioWarning";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kClassStarvation: return "ClassStarvation";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kNoEvents: return "NoEvents";
    case ErrorCode::kDivergence: return "Divergence";
    case ErrorCode::kEmptyBag: return "EmptyBag";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kDegenerateMarginals: return "DegenerateMarginals";
    case ErrorCode::kNoComparablePairs: return "NoComparablePairs";
    case ErrorCode::kMissingFeatures: return "MissingFeatures";
    case ErrorCode::kIncompatibleFramework: return "IncompatibleFramework";
    case ErrorCode::kEmptyMatrix: return "EmptyMatrix";
    case ErrorCode::kTaskParseFailure: return "TaskParseFailure";
    case ErrorCode::kNoResults: return "NoResults";
    case ErrorCode::kMissingLedger: return "MissingLedger";
    case ErrorCode::kUnknownSubcommand: return "UnknownSubcommand";
  }
  return "Unknown";
}

}  // namespace pathforge
