/* C interface for the twgrpo training laboratory.
 *
 * Conventions:
 *   - Functions return TW_OK (0) on success and a negative code on failure.
 *   - On failure, twgrpo_last_error() returns a message for the most recent
 *     failing call on the calling thread; the pointer stays valid until the
 *     next failing call on that thread.
 *   - Out-parameters are written only on success.
 *   - Handles are opaque and must be released with the matching _free
 *     function; strings returned through out-parameters must be released
 *     with twgrpo_string_free.
 */

#ifndef TWGRPO_H
#define TWGRPO_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define TW_OK 0
#define TW_ERR (-1)
#define TW_NULL_ARG (-2)
#define TW_BAD_UTF8 (-3)

typedef struct TwCorpus TwCorpus;
typedef struct TwTrainer TwTrainer;

/* Error reporting. */
const char *twgrpo_last_error(void);
void twgrpo_string_free(char *s);

/* Corpus construction and persistence (JSON-lines files). */
int32_t twgrpo_corpus_generate(size_t train, size_t eval, size_t n_options,
                               uint64_t seed, bool single_choice,
                               TwCorpus **out);
int32_t twgrpo_corpus_load(const char *path, TwCorpus **out);
int32_t twgrpo_corpus_save(const TwCorpus *corpus, const char *path);
int32_t twgrpo_corpus_augment(const TwCorpus *corpus, double invert_prob,
                              double drop_prob, uint64_t seed, TwCorpus **out);
size_t twgrpo_corpus_len(const TwCorpus *corpus);
void twgrpo_corpus_free(TwCorpus *corpus);

/* Training. config_toml holds TrainConfig fields in TOML; pass "" for
 * defaults. Missing fields take their defaults. */
int32_t twgrpo_trainer_new(const TwCorpus *corpus, const char *config_toml,
                           TwTrainer **out);
int32_t twgrpo_trainer_run(TwTrainer *trainer);
int32_t twgrpo_trainer_step(TwTrainer *trainer);
uint64_t twgrpo_trainer_steps_taken(const TwTrainer *trainer);
int32_t twgrpo_trainer_eval(const TwTrainer *trainer, double *accuracy,
                            double *soft_accuracy);
int32_t twgrpo_trainer_metrics_csv(const TwTrainer *trainer, char **out);
int32_t twgrpo_trainer_save_checkpoint(const TwTrainer *trainer,
                                       const char *dir);
int32_t twgrpo_trainer_load_checkpoint(TwTrainer *trainer, const char *dir);
void twgrpo_trainer_free(TwTrainer *trainer);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TWGRPO_H */
