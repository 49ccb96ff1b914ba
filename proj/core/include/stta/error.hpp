#pragma once

#include <stdexcept>
#include <string>

namespace stta {

// Base class for every error the library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 6D rotation input whose columns are zero or parallel.
struct DegenerateRotationError : Error { using Error::Error; };

// A joint sits at or behind the camera plane.
struct ProjectionError : Error { using Error::Error; };

// Point set too degenerate (collinear or collapsed) to align.
struct DegenerateAlignmentError : Error { using Error::Error; };

// Motion segment shorter than the minimum usable length.
struct SegmentTooShortError : Error { using Error::Error; };

// Encoder produced a zero vector that cannot be normalized.
struct DegenerateEmbeddingError : Error { using Error::Error; };

// Semantic class id outside the known set.
struct UnknownLabelError : Error { using Error::Error; };

// Embedding calibration could not reach its quality gate.
struct CalibrationError : Error { using Error::Error; };

struct DimensionError : Error { using Error::Error; };
struct ShapeMismatchError : Error { using Error::Error; };

// Regressor parameters contain NaN or infinity.
struct PoisonedParamsError : Error { using Error::Error; };

// API misuse, e.g. backward() on a tape without a recorded scalar loss.
struct UsageError : Error { using Error::Error; };

struct IoError : Error { using Error::Error; };

}  // namespace stta
