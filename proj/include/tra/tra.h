/* Public C API for the tensor relational engine.
 *
 * All functions return a tra_status; non-zero means failure and
 * tra_last_error(engine) carries the message. Objects are opaque handles
 * owned by the caller and released with the matching _destroy call.
 * Strings returned through char** outputs are released with
 * tra_string_free.
 */
#ifndef TRA_TRA_H
#define TRA_TRA_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef int tra_status;
enum {
  TRA_OK = 0,
  TRA_ERR_SHAPE = 1,
  TRA_ERR_KERNEL_TYPE = 2,
  TRA_ERR_CONSTRAINT = 3,
  TRA_ERR_VALIDATION = 4,
  TRA_ERR_EXECUTION = 5,
  TRA_ERR_IO = 6,
  TRA_ERR_MISUSE = 7,
};

typedef struct tra_engine tra_engine;
typedef struct tra_relation tra_relation;
typedef struct tra_catalog tra_catalog;
typedef struct tra_expr tra_expr;
typedef struct tra_plan tra_plan;
typedef struct tra_result tra_result;

/* engine ------------------------------------------------------------- */
tra_engine* tra_engine_create(void);
void tra_engine_destroy(tra_engine* e);
const char* tra_last_error(const tra_engine* e);
void tra_string_free(char* s);

/* relations ---------------------------------------------------------- */
tra_status tra_relation_load(tra_engine* e, const char* path, tra_relation** out);
tra_status tra_relation_save(tra_engine* e, const tra_relation* rel, const char* path);
/* chop a row-major rows x cols matrix into blocks */
tra_status tra_relation_blockify(tra_engine* e, const double* data, uint64_t rows, uint64_t cols,
                                 uint64_t block_rows, uint64_t block_cols, tra_relation** out);
/* inverse; *rows x *cols doubles written to a buffer owned by the caller */
tra_status tra_relation_unblockify(tra_engine* e, const tra_relation* rel, double* buffer,
                                   uint64_t buffer_len, uint64_t* rows, uint64_t* cols);
tra_status tra_relation_stats(tra_engine* e, const tra_relation* rel, uint64_t* key_arity,
                              uint64_t* tuple_count, uint64_t* float_count);
/* "ok" or a violation description */
tra_status tra_relation_check(tra_engine* e, const tra_relation* rel, char** report);
void tra_relation_destroy(tra_relation* rel);

/* catalogs ----------------------------------------------------------- */
tra_status tra_catalog_create(tra_engine* e, tra_catalog** out);
/* layout: "all" | "none" | "dims:0,1,..." */
tra_status tra_catalog_add(tra_engine* e, tra_catalog* cat, const char* name,
                           const tra_relation* rel, const char* layout);
tra_status tra_catalog_add_shape(tra_engine* e, tra_catalog* cat, const char* name,
                                 const uint64_t* frontier, uint64_t key_arity,
                                 const uint64_t* bound, uint64_t rank, const char* layout);
tra_status tra_catalog_load(tra_engine* e, const char* json_path, tra_catalog** out);
void tra_catalog_destroy(tra_catalog* cat);

/* logical expressions ------------------------------------------------ */
tra_status tra_expr_load(tra_engine* e, const char* path, tra_expr** out);
tra_status tra_expr_save(tra_engine* e, const tra_expr* expr, const char* path);
/* single-site reference evaluation */
tra_status tra_expr_eval(tra_engine* e, const tra_expr* expr, const tra_catalog* cat,
                         tra_relation** out);
void tra_expr_destroy(tra_expr* expr);

/* physical plans ------------------------------------------------------ */
tra_status tra_compile(tra_engine* e, const tra_expr* expr, const tra_catalog* cat,
                       tra_plan** out);
tra_status tra_plan_load(tra_engine* e, const char* path, tra_plan** out);
tra_status tra_plan_save(tra_engine* e, const tra_plan* plan, const char* path);
tra_status tra_plan_explain(tra_engine* e, const tra_plan* plan, const tra_catalog* cat,
                            char** text);
/* shape-only validation + frontier inference + transfer costing */
tra_status tra_plan_cost(tra_engine* e, const tra_plan* plan, const tra_catalog* cat,
                         uint32_t sites, uint64_t* total_transfer, char** csv);
void tra_plan_destroy(tra_plan* plan);

/* optimizer ----------------------------------------------------------- */
/* explores the rule space; returns the chosen plan plus the plan table in
 * CSV and aligned-text form */
tra_status tra_optimize(tra_engine* e, const tra_plan* plan, const tra_catalog* cat,
                        uint32_t sites, uint64_t max_plans, uint64_t max_depth,
                        int r25_complement, tra_plan** best, char** table_csv,
                        char** table_text);

/* execution ----------------------------------------------------------- */
/* mode: "threads" | "processes"; check != 0 turns on constraint checking */
tra_status tra_execute(tra_engine* e, const tra_plan* plan, const tra_catalog* cat,
                       uint32_t sites, const char* mode, int check, tra_result** out);
tra_status tra_result_root_count(tra_engine* e, const tra_result* res, uint64_t* count);
tra_status tra_result_root_name(tra_engine* e, const tra_result* res, uint64_t index,
                                char** name);
/* the projected logical relation of a root */
tra_status tra_result_relation(tra_engine* e, const tra_result* res, const char* root,
                               tra_relation** out);
/* physical dump of a root (site column included) */
tra_status tra_result_save_physical(tra_engine* e, const tra_result* res, const char* root,
                                    const char* path);
tra_status tra_result_trace_csv(tra_engine* e, const tra_result* res, char** csv);
tra_status tra_result_total_transfer(tra_engine* e, const tra_result* res, uint64_t* floats);
void tra_result_destroy(tra_result* res);

/* oracle validation: compile, execute at `sites`, compare against the
 * single-site evaluation; *passed = 1 on agreement within tol */
tra_status tra_validate_expr(tra_engine* e, const tra_expr* expr, const tra_catalog* cat,
                             uint32_t sites, const char* mode, double tol, int* passed,
                             char** detail);

/* workloads ----------------------------------------------------------- */
/* workload: "matmul" | "nn" | "ffnn"; variant: "bmm"|"cmm"|"rmm",
 * "horizontal"|"vertical", "dp"|"mp"; config is a JSON object (see the
 * README for keys); returns the generated plan and its catalog */
tra_status tra_workload_build(tra_engine* e, const char* workload, const char* variant,
                              const char* config_json, tra_plan** plan, tra_catalog** cat);
/* preset: "table3"|"table5"|"table6"|"desk"; *ok = 1 when the preset's
 * checks hold */
tra_status tra_bench(tra_engine* e, const char* workload, const char* preset, uint32_t sites,
                     char** text, char** csv, int* ok);

/* process-mode worker entry (used by embedders that spawn their own
 * workers; the built-in process mode forks internally) */

#ifdef __cplusplus
}
#endif

#endif /* TRA_TRA_H */
