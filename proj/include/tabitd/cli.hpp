#pragma once

namespace tabitd::cli {

/// Full command dispatcher: fuse, train, evaluate, explain, predict, datagen,
/// schema. Returns the process exit code: 0 success, 2 usage/input error,
/// 3 training failure, 4 schema fingerprint mismatch.
int run(int argc, const char* const* argv);

} // namespace tabitd::cli
