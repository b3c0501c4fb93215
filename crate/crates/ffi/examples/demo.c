#include <stdio.h>
#include <string.h>

#include "capt_bench.h"

static int check(CaptStatus s, const char *what) {
    if (s != CAPT_STATUS_OK) {
        const char *msg = capt_last_error();
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, msg ? msg : "?");
        return 1;
    }
    return 0;
}

int main(void) {
    CaptInventory *inv = capt_inventory_default();
    printf("version %s, %zu phones\n", capt_version(), capt_inventory_len(inv));

    CaptEditCounts c;
    if (check(capt_align_phones(inv, "K AE T", "K AE D S", &c), "align")) return 1;
    double per;
    if (check(capt_error_rate(&c, &per), "error_rate")) return 1;
    printf("S=%llu I=%llu PER=%.4f\n", (unsigned long long)c.substitutions, (unsigned long long)c.insertions, per);

    bool flags[8];
    size_t n;
    if (check(capt_flag_detected(inv, "K AE T", "K T", flags, 8, &n), "flag_detected")) return 1;
    bool truth[3] = {false, true, false};
    CaptMddCounts mc;
    if (check(capt_mdd_counts(flags, truth, n, &mc), "mdd_counts")) return 1;
    CaptMddScores ms;
    if (check(capt_mdd_scores(&mc, &ms), "mdd_scores")) return 1;
    printf("TP=%llu F1=%.4f\n", (unsigned long long)mc.true_pos, ms.f1);

    double x[4] = {1, 2, 3, 4}, y[4] = {2, 4, 5, 4};
    CaptCorrelation r;
    if (check(capt_pcc(x, y, 4, &r), "pcc")) return 1;
    printf("r=%.4f p=%.4f\n", r.r, r.p_value);

    CaptApaScores apa;
    if (check(capt_parse_apa("Sure: {'accuracy': 8, 'fluency': 7, 'prosodic': 9, 'total': 8}", &apa), "parse_apa")) return 1;
    printf("accuracy=%d total=%d\n", apa.accuracy, apa.total);

    if (capt_parse_apa("no scores here", &apa) != CAPT_STATUS_PARSE_FAILURE) return 1;
    printf("error: %s\n", capt_last_error());

    char *prompt;
    if (check(capt_build_prompt("mdd", true, &prompt), "build_prompt")) return 1;
    printf("prompt starts with %.7s\n", prompt);
    capt_string_free(prompt);

    capt_inventory_free(inv);
    return 0;
}
