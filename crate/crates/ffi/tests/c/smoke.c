#include <stdio.h>
#include "qsec.h"

int main(void) {
    size_t dims[3] = {2, 1, 1};
    size_t src[2] = {0, 0};
    size_t dst[2] = {1, 2};
    double a0[2] = {1.0, 2.0};
    double a1[2] = {0.0, -1.0};
    QsecRepresentation *rep = NULL;
    QsecSectionSpace *space = NULL;
    int64_t bound = -1;

    if (qsec_representation_new(3, dims, 2, src, dst, &rep) != QSEC_STATUS_OK) return 10;
    if (qsec_representation_set_map(rep, 0, 1, 2, a0) != QSEC_STATUS_OK) return 11;
    if (qsec_representation_set_map(rep, 1, 1, 2, a1) != QSEC_STATUS_OK) return 12;
    if (qsec_representation_set_map(rep, 1, 2, 1, a1) != QSEC_STATUS_SHAPE_MISMATCH) return 13;
    if (qsec_last_error_message() == NULL) return 14;
    if (qsec_sections(rep, -1.0, &space) != QSEC_STATUS_OK) return 15;
    if (qsec_dimension_lower_bound(rep, &bound) != QSEC_STATUS_OK) return 16;
    printf("d=%zu n=%zu bound=%lld\n", qsec_section_space_dim(space),
           qsec_section_space_total_dim(space), (long long)bound);
    qsec_section_space_free(space);
    qsec_representation_free(rep);
    return 0;
}
