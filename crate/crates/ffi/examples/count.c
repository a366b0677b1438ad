/* cc count.c -I../include -L../../../target/debug -l:libsawb_ffi.a -lpthread -ldl -lm */
#include <stdio.h>
#include "sawb.h"

int main(void) {
    SawbGroup *g = NULL;
    if (sawb_group_new_quat(2, 3, 1, &g) != SAWB_STATUS_OK) {
        fprintf(stderr, "%s\n", sawb_last_error_message());
        return 1;
    }
    for (uint64_t t = 2; t <= 64; t *= 2) {
        uint64_t n = 0;
        sawb_count_ball(g, t, &n);
        printf("T=%llu count=%llu\n", (unsigned long long)t, (unsigned long long)n);
    }
    sawb_group_free(g);
    uint64_t u, v;
    sawb_pell_fundamental(2, &u, &v);
    printf("pell(2) = (%llu, %llu)\n", (unsigned long long)u, (unsigned long long)v);
    return 0;
}
