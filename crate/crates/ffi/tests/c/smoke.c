#include <math.h>
#include <stdio.h>
#include <string.h>

#include "funcause.h"

#define CHECK(expr)                                                              \
    do {                                                                         \
        FcStatus s_ = (expr);                                                    \
        if (s_ != FC_STATUS_OK) {                                                \
            const char *m_ = fc_last_error_message();                            \
            fprintf(stderr, "%s failed (%d): %s\n", #expr, s_, m_ ? m_ : "");    \
            return 1;                                                            \
        }                                                                        \
    } while (0)

int main(void) {
    /* Two arms, constant effect 2 on a 5-point grid. */
    enum { N = 6, T = 5 };
    double x[N] = {0, 1, 0, 1, 0, 1};
    double y[N * T];
    for (int i = 0; i < N; i++)
        for (int j = 0; j < T; j++)
            y[i * T + j] = 0.1 * j + 2.0 * x[i] + 0.01 * i;

    FcDataset *ds = NULL;
    CHECK(fc_dataset_from_arrays(N, T, 0, x, NULL, y, &ds));
    if (fc_dataset_len(ds) != N || fc_dataset_grid_len(ds) != T) return 2;

    FcEffect *eff = NULL;
    CHECK(fc_estimate(ds, "frechet-euclid", 0.0, &eff));
    double delta[T];
    CHECK(fc_effect_delta(eff, delta, T));
    for (int j = 0; j < T; j++)
        if (fabs(delta[j] - 2.01) > 1e-12) return 3;

    if (fc_estimate(ds, "no-such-estimator", 0.0, &eff) != FC_STATUS_INVALID_ARGUMENT) return 4;
    if (strstr(fc_last_error_message(), "no-such-estimator") == NULL) return 5;

    double a[3] = {1, 2, 3}, b[3] = {1, 2, 3}, t, df, p;
    CHECK(fc_welch_t_test(a, 3, b, 3, &t, &df, &p));
    if (t != 0.0 || p != 1.0) return 6;

    fc_effect_free(eff);
    fc_dataset_free(ds);
    printf("ok %s\n", fc_version());
    return 0;
}
