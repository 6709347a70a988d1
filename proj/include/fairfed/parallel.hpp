#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fairfed::exec {

enum class Mode {
  Serial,    // reference path, plain loops
  Parallel,  // OpenMP worker loops
};

Mode mode();
void set_mode(Mode m);

/// Runs fn(i) for i in [0, n). Under Mode::Parallel the iterations are
/// distributed over OpenMP threads; each index must write only to its own
/// slots so results never depend on the schedule.
template <class F>
void parallel_for(int n, F&& fn) {
#ifdef _OPENMP
  if (mode() == Mode::Parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
#endif
  for (int i = 0; i < n; ++i) {
    fn(i);
  }
}

}  // namespace fairfed::exec
