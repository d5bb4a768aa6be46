// Small canvas strip charts: confidence history and per-class probabilities.

const CLASS_COLORS = ["#888f98", "#d9a441", "#ff6188", "#7ee081", "#4fc1ff"];

export function drawLambdaChart(ctx: CanvasRenderingContext2D, width: number,
                                height: number, history: number[]): void {
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, width, height);
  ctx.strokeStyle = "#1d242e";
  ctx.lineWidth = 1;
  for (const level of [0.0, 0.5, 0.8, 1.0]) {
    const y = height - level * height;
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(width, y);
    ctx.stroke();
  }
  if (history.length < 2) return;
  ctx.strokeStyle = "#7ee081";
  ctx.lineWidth = 2;
  ctx.beginPath();
  history.forEach((lam, i) => {
    const x = (i / (history.length - 1)) * width;
    const y = height - lam * height;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

export function drawProbChart(ctx: CanvasRenderingContext2D, width: number,
                              height: number,
                              history: (number[] | null)[]): void {
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, width, height);
  if (history.length < 2) return;
  for (let cls = 0; cls < 5; cls++) {
    ctx.strokeStyle = CLASS_COLORS[cls];
    ctx.lineWidth = cls === 0 ? 1 : 1.5;
    ctx.beginPath();
    let started = false;
    history.forEach((probs, i) => {
      if (!probs) {
        started = false;
        return;
      }
      const x = (i / (history.length - 1)) * width;
      const y = height - probs[cls] * height;
      if (!started) {
        ctx.moveTo(x, y);
        started = true;
      } else {
        ctx.lineTo(x, y);
      }
    });
    ctx.stroke();
  }
  // threshold line at 0.8
  ctx.strokeStyle = "#b3542e";
  ctx.setLineDash([3, 3]);
  ctx.beginPath();
  ctx.moveTo(0, height - 0.8 * height);
  ctx.lineTo(width, height - 0.8 * height);
  ctx.stroke();
  ctx.setLineDash([]);
}
