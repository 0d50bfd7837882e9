#include <stdio.h>
#include "superjet.h"

int main(void) {
    SjContext *ctx = NULL;
    SjPoly *p = NULL, *r = NULL;
    char *s = NULL;
    if (sj_context_new("u", "eps", 2, &ctx) != SJ_OK) return 1;
    if (sj_poly_parse(ctx, "1/2*u1_0*th1_0*th1_1 + 1/16*eps^2*th1_0*th1_3", &p) != SJ_OK) return 1;
    if (sj_schouten(p, p, &r) != SJ_OK) return 1;
    bool zero = false;
    sj_functional_is_zero(r, &zero);
    sj_poly_to_string(p, &s);
    printf("P1 = %s, [P1,P1] = 0: %s\n", s, zero ? "yes" : "no");
    sj_string_free(s);
    sj_poly_free(r);
    r = NULL;
    int code = sj_poly_parse(ctx, "u1_0 +", &r);
    printf("bad input -> %d (%s)\n", code, sj_last_error());
    sj_poly_free(p);
    sj_context_free(ctx);
    return zero ? 0 : 1;
}
