/* Compiled as C to keep streamcl.h valid C. */
#include <stdio.h>
#include <string.h>

#include "streamcl/streamcl.h"

int main(void) {
  streamcl_mean_table* t = NULL;
  float x[3] = {3.0f, 4.0f, 0.0f};
  float origin[3] = {0.0f, 0.0f, 0.0f};
  double d = 0.0;
  streamcl_learner_options o;

  if (strcmp(streamcl_version(), "0.1.0") != 0) return 1;
  if (streamcl_mean_table_create(3, &t) != STREAMCL_OK) return 1;
  if (streamcl_mean_table_update(t, 0, origin, 3) != STREAMCL_OK) return 1;
  if (streamcl_mean_table_distance(t, 0, x, 3, &d) != STREAMCL_OK || d != 5.0) return 1;
  if (streamcl_mean_table_distance(t, 7, x, 3, &d) == STREAMCL_OK) return 1;
  if (streamcl_last_error()[0] == '\0') return 1;
  streamcl_mean_table_destroy(t);

  streamcl_learner_options_init(&o);
  if (o.method != STREAMCL_METHOD_CANDIDATE_NCM) return 1;
  printf("c smoke ok\n");
  return 0;
}
