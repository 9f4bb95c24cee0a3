#include <stdio.h>
#include <math.h>
#include "qviterbi.h"

int main(void) {
    QvCode *code = NULL;
    if (qv_code_new("1,2,2;5,7", &code) != QV_STATUS_OK) return 1;
    uint8_t rx[8] = {0};
    QvPathSpace *ps = NULL;
    if (qv_path_space_new(code, rx, 8, &ps) != QV_STATUS_OK) return 2;
    double prob = 0.0;
    size_t top = 99;
    if (qv_run_qva(ps, 0.68, 3, &prob, &top) != QV_STATUS_OK) return 3;
    if (fabs(prob - 0.673) > 0.005 || top != 0) return 4;
    if (qv_code_new("bogus", &code) != QV_STATUS_INVALID_ARGUMENT) return 5;
    if (qv_last_error_message()[0] == '\0') return 6;
    qv_path_space_free(ps);
    qv_code_free(code);
    printf("%.4f\n", prob);
    return 0;
}
