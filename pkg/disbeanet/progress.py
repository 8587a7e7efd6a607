from rich.progress import Progress, TextColumn, BarColumn, SpinnerColumn, TimeElapsedColumn, TimeRemainingColumn


class TrainingProgress:
    """Progress bar over training epochs, showing the latest losses."""
    def __init__(self, show_progress, total_epochs, description="Training"):
        self.description = description
        if show_progress:
            self.progress = Progress(
                SpinnerColumn(),
                TextColumn("[bold blue]{task.description}"),
                BarColumn(complete_style="green", finished_style="green", pulse_style="yellow", bar_width=None),
                TextColumn("{task.percentage:>3.0f}%"),
                TimeElapsedColumn(),
                TimeRemainingColumn(),
                TextColumn("{task.fields[losses]}"),
                expand=False,
            )
            self.task_id = self.progress.add_task(
                f"[cyan]{description}...",
                total=total_epochs,
                losses=self._losses_format(None, None),
            )
        else:
            self.progress = None
            self.task_id = None

    def update(self, train_loss, val_loss):
        if self.progress:
            losses = self._losses_format(train_loss, val_loss)
            self.progress.update(self.task_id, advance=1, description=f"[green]{self.description}...", losses=losses)

    def stop_early(self):
        """Mark the bar complete when training stops before the epoch budget."""
        if self.progress:
            task = self.progress.tasks[0]
            self.progress.update(self.task_id, completed=task.total)

    def _losses_format(self, train_loss, val_loss):
        if train_loss is None:
            return "[yellow]train   --[/yellow] [magenta]val   --[/magenta]"
        return f"[yellow]train {train_loss:.3e}[/yellow] [magenta]val {val_loss:.3e}[/magenta]"

    def __enter__(self):
        if self.progress:
            self.progress.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.progress:
            self.progress.stop()
