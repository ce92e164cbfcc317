// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end.
//
//   factorfields fit-image  [opts] IMAGE
//   factorfields fit-sdf    [opts] SAMPLES [--test SAMPLES]
//   factorfields fit-rf     [opts] CAMERAS [--test CAMERAS]
//   factorfields train-shared [opts] IMAGE IMAGE...
//   factorfields eval       CHECKPOINT DATA [--threads N]
//   factorfields render     CHECKPOINT [--cameras CAMERAS] [--size N] [--out DIR]
//   factorfields info       [--config FILE] [--set k=v]...
//   factorfields make-synthetic KIND OUT [--count N] [--size N] [--seed N]
//
// Common options: --config FILE, --set key=value (repeatable, applied after
// the file), --seed N, --out DIR (default "."), --threads N (default 1).
#pragma once

#include <iosfwd>

namespace factorfields {

/// Runs one command. Returns 0 on success; prints a single-line diagnostic
/// to `err` and returns nonzero on failure.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

/// Keeps large per-step tape buffers on the heap instead of mapping and
/// unmapping them every step. No-op outside glibc.
void configure_allocator();

}  // namespace factorfields
