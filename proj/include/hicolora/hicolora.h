/* C interface to the HiCoLoRA dialogue state tracking library.
 *
 * Every function returns an hcl_status. On failure the message is available
 * from hcl_last_error() until the next call on the same thread. Strings
 * returned through char** out-parameters are owned by the caller and released
 * with hcl_string_free. */
#ifndef HICOLORA_H
#define HICOLORA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HCL_API __declspec(dllexport)
#else
#define HCL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hcl_status {
    HCL_OK = 0,
    HCL_ERR_NUMERICAL = 1,
    HCL_ERR_CONFIG = 2,
    HCL_ERR_ARGUMENT = 3,
    HCL_ERR_IO = 4,
    HCL_ERR_FORMAT = 5,
    HCL_ERR_LOOKUP = 6,
    HCL_ERR_CONTRACT = 7,
    HCL_ERR_INTERNAL = 8
} hcl_status;

typedef struct hcl_config hcl_config;
typedef struct hcl_corpus hcl_corpus;
typedef struct hcl_clusters hcl_clusters;
typedef struct hcl_model hcl_model;

HCL_API const char* hcl_last_error(void);
HCL_API const char* hcl_status_name(hcl_status status);
HCL_API void hcl_string_free(char* s);
/* 0 trace .. 6 off, as in spdlog. */
HCL_API hcl_status hcl_set_log_level(int level);

/* Run configuration. */
HCL_API hcl_status hcl_config_default(hcl_config** out);
HCL_API hcl_status hcl_config_load(const char* path, hcl_config** out);
HCL_API hcl_status hcl_config_parse(const char* json, hcl_config** out);
HCL_API hcl_status hcl_config_to_json(const hcl_config* cfg, char** out);
HCL_API hcl_status hcl_config_set_seed(hcl_config* cfg, uint64_t seed);
/* Applies HICOLORA_SEED when set; *applied (optional) receives 1 if it was. */
HCL_API hcl_status hcl_config_apply_env_seed(hcl_config* cfg, int* applied);
HCL_API void hcl_config_free(hcl_config* cfg);

/* Corpora. A NULL schemas_path selects the built-in train/taxi/hotel schemas. */
HCL_API hcl_status hcl_corpus_generate(const char* schemas_path, uint64_t seed, size_t dialogs_per_domain, size_t turns,
                                       hcl_corpus** out);
HCL_API hcl_status hcl_corpus_load(const char* path, hcl_corpus** out);
HCL_API hcl_status hcl_corpus_save(const hcl_corpus* corpus, const char* path);
HCL_API hcl_status hcl_corpus_dialog_count(const hcl_corpus* corpus, size_t* out);
HCL_API void hcl_corpus_free(hcl_corpus* corpus);

/* Writes a toy bag-of-words embedding file with one entry per domain and per
 * "domain-slot: question" prompt key. */
HCL_API hcl_status hcl_toy_embeddings(const char* schemas_path, size_t dim, uint64_t seed, const char* out_path);

/* Spectral clustering of the named domain and prompt keys. toy_dim > 0 embeds
 * keys missing from the file with the toy embedder (seeded by toy_seed). */
HCL_API hcl_status hcl_clusters_compute(const char* embeddings_path, const char* const* domains, size_t num_domains,
                                        const char* const* prompts, size_t num_prompts, size_t k_min, size_t k_max,
                                        uint64_t seed, size_t toy_dim, uint64_t toy_seed, hcl_clusters** out);
/* Clusters for every domain and prompt of a corpus's schemas. */
HCL_API hcl_status hcl_clusters_for_corpus(const hcl_corpus* corpus, const char* embeddings_path, const hcl_config* cfg,
                                           uint64_t seed, hcl_clusters** out);
HCL_API hcl_status hcl_clusters_load(const char* path, hcl_clusters** out);
HCL_API hcl_status hcl_clusters_save(const hcl_clusters* clusters, const char* path);
HCL_API hcl_status hcl_clusters_counts(const hcl_clusters* clusters, size_t* m, size_t* n);
HCL_API hcl_status hcl_clusters_to_json(const hcl_clusters* clusters, char** out);
HCL_API void hcl_clusters_free(hcl_clusters* clusters);

/* Trains and writes out_dir/{checkpoint/, history.json, timing.json,
 * config.json}. *summary (optional) receives a JSON object with the final dev
 * and test metrics. */
HCL_API hcl_status hcl_train(const hcl_config* cfg, const hcl_corpus* corpus, const hcl_clusters* clusters,
                             const char* out_dir, char** summary);

/* Loads an unmerged or merged checkpoint. A non-NULL clusters handle must
 * hash to the manifest the checkpoint was trained with. */
HCL_API hcl_status hcl_model_load(const char* dir, const hcl_clusters* clusters, hcl_model** out);
HCL_API hcl_status hcl_model_is_merged(const hcl_model* model, int* out);
HCL_API void hcl_model_free(hcl_model* model);

/* split: "train", "dev", "test" or "all". *metrics receives
 * {"jga":..,"aga":..,"turns":..}. */
HCL_API hcl_status hcl_eval(const hcl_model* model, const hcl_corpus* corpus, const char* split, char** metrics);

/* Merges an unmerged model, checks merged against unmerged logits (after
 * float32 rounding) on num_checks seeded queries and writes the merged
 * checkpoint only when the largest gap is <= tolerance. */
HCL_API hcl_status hcl_merge(const hcl_model* model, const char* out_dir, size_t num_checks, uint64_t check_seed,
                             double tolerance, double* gap);

/* Builds an initialized model and reports its per-layer init factors. */
HCL_API hcl_status hcl_inspect_init(const hcl_config* cfg, const hcl_corpus* corpus, const hcl_clusters* clusters,
                                    char** report);

/* Comma-separated variants and seeds; seeds may be NULL for the config seed.
 * *csv receives the ablation CSV. */
HCL_API hcl_status hcl_ablate(const hcl_config* cfg, const hcl_corpus* corpus, const hcl_clusters* clusters,
                              const char* variants, const char* seeds, char** csv);

#ifdef __cplusplus
}
#endif

#endif /* HICOLORA_H */
