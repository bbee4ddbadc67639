app_name = "scene_stylizer"
app_title = "Scene Stylizer"
app_description = "Coarse-to-fine neural field stylization of sparse-view scenes"
app_license = "mit"

# Commands
# --------
# Subcommand name -> handler(args, cfg, out_dir); each returns the path of its main output

commands = {
	"make-scene": "scene_stylizer.api.scene.make_scene",
	"gen-extractor-weights": "scene_stylizer.api.scene.gen_extractor_weights",
	"train-coarse": "scene_stylizer.api.train.train_coarse_command",
	"train-style": "scene_stylizer.api.train.train_style_command",
	"render": "scene_stylizer.api.evaluate.render_command",
	"evaluate": "scene_stylizer.api.evaluate.evaluate_command",
	"ablate": "scene_stylizer.api.ablate.ablate_command",
}

# Registries
# ----------
# Extra scene presets: name -> zero-argument builder returning an AnalyticScene

scene_presets = {}

# Output
# ------

output_root = "runs"
manifest_file = "manifest.txt"
log_file = "run.log"
