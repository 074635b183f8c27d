#include <math.h>
#include <stdio.h>

#include "equidist.h"

static int fail(const char *what) {
  char msg[256];
  equidist_last_error(msg, sizeof msg);
  fprintf(stderr, "%s: %s\n", what, msg);
  return 1;
}

int main(void) {
  EquidistMap *map = NULL;
  EquidistSolver *solver = NULL;
  EquidistFiber *fiber = NULL;
  if (equidist_map_preset("basilica", &map) != EQUIDIST_STATUS_OK) return fail("preset");
  if (equidist_solver_new(map, &solver) != EQUIDIST_STATUS_OK) return fail("solver");
  equidist_map_free(map);

  const double a[4] = {0.3, 0.2, 1.0, 0.0};
  if (equidist_fiber_new(solver, a, 4, 6, &fiber) != EQUIDIST_STATUS_OK) return fail("fiber");
  if (equidist_fiber_total_multiplicity(fiber) != 64) return fail("mass");
  if (!(equidist_fiber_residual(fiber) <= 1e-8)) return fail("residual");

  double p[4];
  size_t m = 0;
  if (equidist_fiber_point(fiber, 0, p, 4, &m) != EQUIDIST_STATUS_OK || m != 1) return fail("point");
  if (equidist_fiber_point(fiber, 0, p, 2, &m) != EQUIDIST_STATUS_BUFFER_TOO_SMALL) return fail("small buffer");

  equidist_fiber_free(fiber);
  equidist_solver_free(solver);
  printf("ok\n");
  return 0;
}
